import numpy as np
import pytest
from hypothesis import settings

from crowdnet import _kernels_py
from crowdnet._backend import COMPILED, kernels

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

BACKENDS = [pytest.param(_kernels_py, id="python")]
if COMPILED:
    BACKENDS.append(pytest.param(kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_ergodic(rng, n, density=0.6):
    """Row-stochastic matrix with positive diagonal and a spanning cycle."""
    w = rng.random((n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(w, rng.random(n) + 0.05)
    perm = rng.permutation(n)
    for a, b in zip(perm, np.roll(perm, -1)):
        w[a, b] += rng.random() + 0.05
    return w / w.sum(axis=1, keepdims=True)


def left_vector_oracle(w):
    """Left fixed vector by dense eigendecomposition (independent of power iteration)."""
    vals, vecs = np.linalg.eig(w.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in sorted(RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{status:4} {criterion}: {detail}")
