"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 20] [--repeat 5]

Also times whole simulated trials under each backend (the fallback is forced
in a subprocess via CROWDNET_PURE=1).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from crowdnet import _kernels_py
from crowdnet._backend import COMPILED, kernels

TRIAL_SNIPPET = """
import timeit
from crowdnet import simlab
from crowdnet._backend import NAME
specs = [simlab.TrialSpec(condition=c, seed=s) for c in ("discussion", "delphi") for s in range(100)]
t = min(timeit.repeat(lambda: [simlab.run_trial(s) for s in specs], number=1, repeat={repeat}))
print(NAME, t / len(specs))
"""


def _problem(n, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.random((n, n))
    np.fill_diagonal(w, w.diagonal() + 0.5)
    w /= w.sum(axis=1, keepdims=True)
    return w, rng.normal(100.0, 30.0, n)


def _time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    w, x = _problem(args.n)
    t = np.abs(x)
    cases = {
        "left_fixed_vector": lambda k: k.left_fixed_vector(w, 1e-13, 100_000),
        "consensus": lambda k: k.consensus(w, x, 1e-10, 1_000_000),
        "propagate(4)": lambda k: k.propagate(w, x, 4),
        "gini": lambda k: k.gini(t),
    }
    backends = [("python", _kernels_py)] + ([("cython", kernels)] if COMPILED else [])
    print(f"n={args.n}  compiled extension: {'yes' if COMPILED else 'no'}")
    print(f"{'kernel':<20}" + "".join(f"{name:>14}" for name, _ in backends) + ("      speedup" if COMPILED else ""))
    for label, fn in cases.items():
        times = [_time(lambda k=k: fn(k), args.repeat) for _, k in backends]
        row = f"{label:<20}" + "".join(f"{tm * 1e6:>12.1f}us" for tm in times)
        if COMPILED:
            row += f"{times[0] / times[1]:>12.1f}x"
        print(row)

    print("\nper-trial wall time (200 trials, n=20):")
    code = TRIAL_SNIPPET.format(repeat=args.repeat)
    for pure in (("1",) if not COMPILED else ("1", "0")):
        env = dict(os.environ, CROWDNET_PURE=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, sec = out.stdout.split()
        print(f"  {name:<8} {float(sec) * 1e3:8.3f} ms")


if __name__ == "__main__":
    main()
