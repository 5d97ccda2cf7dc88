import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdnet import _kernels_py
from crowdnet._backend import COMPILED, kernels

from .conftest import left_vector_oracle, random_ergodic

needs_ext = pytest.mark.skipif(not COMPILED, reason="compiled extension not built")


def test_fallback_selected_by_env():
    code = "import crowdnet._backend as b; print(b.NAME)"
    env = dict(os.environ, CROWDNET_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_kernels_left_vector(backend):
    rng = np.random.default_rng(0)
    w = random_ergodic(rng, 12)
    v, iters, ok = backend.left_fixed_vector(w, 1e-13, 100_000)
    assert ok and iters > 0
    assert np.allclose(v, left_vector_oracle(w), atol=1e-10)


def test_kernels_consensus_and_propagate(backend):
    rng = np.random.default_rng(1)
    w = random_ergodic(rng, 9)
    x = rng.normal(size=9)
    states = backend.propagate(w, x, 3)
    assert states.shape == (4, 9)
    assert np.allclose(states[3], np.linalg.matrix_power(w, 3) @ x, atol=1e-12)
    final, rounds, ok = backend.consensus(w, x, 1e-11, 10_000)
    assert ok and np.ptp(final) <= 1e-11
    assert np.allclose(final, left_vector_oracle(w) @ x, atol=1e-9)


def test_kernels_gini(backend):
    assert backend.gini(np.array([0.0, 0.0, 1.0])) == pytest.approx(2 / 3, abs=1e-15)
    assert backend.gini(np.array([1.0, 2.0, 3.0, 4.0])) == pytest.approx(0.25, abs=1e-15)


@needs_ext
@given(st.integers(0, 2**32 - 1))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 25))
    w = random_ergodic(rng, n)
    x = rng.normal(0, 100, n)
    a, b = kernels.propagate(w, x, 5), _kernels_py.propagate(w, x, 5)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-11)
    va, _, _ = kernels.left_fixed_vector(w, 1e-13, 100_000)
    vb, _, _ = _kernels_py.left_fixed_vector(w, 1e-13, 100_000)
    assert np.allclose(va, vb, atol=1e-12)
    ca, _, _ = kernels.consensus(w, x, 1e-10, 1_000_000)
    cb, _, _ = _kernels_py.consensus(w, x, 1e-10, 1_000_000)
    assert np.allclose(ca, cb, atol=1e-9)
    t = np.abs(x)
    assert kernels.gini(t) == pytest.approx(_kernels_py.gini(t), abs=1e-13)
