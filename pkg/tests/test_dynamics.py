import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crowdnet import dynamics, netcore
from crowdnet.dynamics import Outcome
from crowdnet.errors import EmptyInput, LengthMismatch, NoConvergence, NotErgodic

from .conftest import left_vector_oracle, random_ergodic

STAR3 = netcore.star_network(3, 0.5, 0.5)


def test_step_examples():
    mean = netcore.build_network(np.full((3, 3), 1 / 3))
    assert np.allclose(dynamics.step(mean, [1, 2, 3]), 2.0)
    ident = netcore.build_network(np.eye(3))
    assert np.array_equal(dynamics.step(ident, [1, 5, 9]), [1, 5, 9])
    assert np.allclose(dynamics.step(STAR3, [10, 2, 2]), [6, 6, 6])


def test_step_length_mismatch():
    with pytest.raises(LengthMismatch):
        dynamics.step(STAR3, [1, 2])


def test_run_rounds_examples():
    traj = dynamics.run_rounds(STAR3, dynamics.BeliefState([10, 2, 2], 5), 0)
    assert traj.rounds == 0 and np.array_equal(traj.final, [10, 2, 2])
    mean = netcore.build_network(np.full((4, 4), 0.25))
    traj = dynamics.run_rounds(mean, [1, 2, 3, 6], 2)
    assert np.allclose(traj.states[1], 3) and np.allclose(traj.states[2], 3)
    assert np.allclose(dynamics.run_rounds(STAR3, [10, 2, 2], 1).final, 6)


def test_run_rounds_matches_matrix_powers():
    rng = np.random.default_rng(4)
    w = random_ergodic(rng, 7)
    net = netcore.build_network(w)
    x0 = rng.normal(size=7)
    traj = dynamics.run_rounds(net, x0, 5)
    for k in range(6):
        assert np.allclose(traj.states[k], np.linalg.matrix_power(net.weights, k) @ x0, atol=1e-12)


def test_converge_examples():
    assert dynamics.converge(netcore.uniform_network(5, 0.2), [1, 2, 3, 4, 5]) == pytest.approx(3, abs=1e-10)
    assert dynamics.converge(STAR3, [10, 2, 2]) == pytest.approx(6, abs=1e-10)
    assert dynamics.converge(netcore.build_network(np.eye(3)), [7, 7, 7]) == 7


def test_converge_errors():
    with pytest.raises(NotErgodic):
        dynamics.converge(netcore.build_network(np.eye(2)), [0, 1])
    slow = netcore.uniform_network(3, 0.999)
    with pytest.raises(NoConvergence):
        dynamics.converge(slow, [0, 1, 2], max_rounds=10)


def test_converge_large_magnitudes():
    # 1e-10 is below float resolution at 1e9; the tolerance floor keeps this finite
    x = np.array([1e9, 1e9 + 1, 2e9])
    got = dynamics.converge(netcore.uniform_network(3, 0.4), x)
    assert got == pytest.approx(x.mean(), rel=1e-13)


@given(arrays(np.float64, st.integers(2, 15), elements=st.floats(-1e3, 1e3)), st.floats(0.01, 0.95))
def test_uniform_conserves_mean(x, s):
    net = netcore.uniform_network(x.shape[0], s)
    assert dynamics.converge(net, x) == pytest.approx(x.mean(), abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_converge_matches_centrality_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 21))
    net = netcore.build_network(random_ergodic(rng, n))
    x0 = rng.normal(0, 10, n)
    assert abs(dynamics.converge(net, x0) - left_vector_oracle(net.weights) @ x0) <= 1e-9


@given(st.integers(0, 2**32 - 1))
def test_contraction(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    w = rng.random((n, n))
    net = netcore.build_network(w / w.sum(axis=1, keepdims=True))
    states = dynamics.run_rounds(net, rng.normal(size=n), 6).states
    assert np.all(np.diff(states.max(axis=1)) <= 1e-12)
    assert np.all(np.diff(states.min(axis=1)) >= -1e-12)


@given(st.permutations(range(6)), st.integers(0, 1000))
def test_permutation_equivariance(order, seed):
    rng = np.random.default_rng(seed)
    net = netcore.build_network(random_ergodic(rng, 6))
    x = rng.normal(size=6)
    order = np.array(order)
    a = dynamics.run_rounds(net, x, 3).states[:, order]
    b = dynamics.run_rounds(net.permuted(order), x[order], 3).states
    assert np.allclose(a, b, atol=1e-12)


def test_group_error_examples():
    assert dynamics.group_error([1, 2, 3], 2) == 0
    assert dynamics.group_error([1, 2, 3, 4, 10], 3) == 1
    assert dynamics.group_error([5], 2) == 3
    with pytest.raises(EmptyInput):
        dynamics.group_error([], 1)


def test_improvement_examples():
    assert dynamics.improvement([4], [3.5], 3) is Outcome.IMPROVED
    assert dynamics.improvement([3.6], [6.4], 5) is Outcome.UNCHANGED
    assert dynamics.improvement([4], [5], 3) is Outcome.WORSENED
    with pytest.raises(EmptyInput):
        dynamics.improvement([], [1], 0)


@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(-1e6, 1e6)), st.floats(-1e6, 1e6))
def test_improvement_reflexive(x, truth):
    assert dynamics.improvement(x, x, truth) is Outcome.UNCHANGED


def test_belief_state_validation():
    with pytest.raises(EmptyInput):
        dynamics.BeliefState([], 1.0)
    s = dynamics.BeliefState([1, 2], 3)
    assert s.n == 2 and not s.estimates.flags.writeable
