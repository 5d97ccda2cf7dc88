"""Select the compiled kernels when available.

Set ``CROWDNET_PURE=1`` to force the numpy fallback.
"""
import os

if os.environ.get("CROWDNET_PURE", "").strip().lower() in ("1", "true", "yes"):
    from . import _kernels_py as kernels

    COMPILED = False
else:
    try:
        from . import _kernels as kernels

        COMPILED = True
    except ImportError:
        from . import _kernels_py as kernels

        COMPILED = False

NAME = "cython" if COMPILED else "python"

__all__ = ["kernels", "COMPILED", "NAME"]
