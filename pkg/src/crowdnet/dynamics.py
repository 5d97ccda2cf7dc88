"""DeGroot belief revision and group-level accuracy scoring."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import EmptyInput, LengthMismatch, NoConvergence, NotErgodic, OutOfRange
from .netcore import InfluenceNetwork, is_ergodic

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ROUNDS = 1_000_000
TIE_TOL = 1e-12


class Outcome(str, enum.Enum):
    IMPROVED = "Improved"
    WORSENED = "Worsened"
    UNCHANGED = "Unchanged"


@dataclass(frozen=True, eq=False)
class BeliefState:
    estimates: np.ndarray
    truth: float

    def __post_init__(self):
        x = np.array(self.estimates, dtype=np.float64).ravel()
        if x.size == 0:
            raise EmptyInput("a belief state needs at least one estimate")
        if not np.all(np.isfinite(x)) or not np.isfinite(self.truth):
            raise OutOfRange("estimates and truth must be finite")
        x.flags.writeable = False
        object.__setattr__(self, "estimates", x)
        object.__setattr__(self, "truth", float(self.truth))

    @property
    def n(self) -> int:
        return self.estimates.shape[0]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """``states[k]`` holds every agent's estimate after ``k`` revision rounds."""

    states: np.ndarray

    @property
    def rounds(self) -> int:
        return self.states.shape[0] - 1

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _estimates(net, x):
    if isinstance(x, BeliefState):
        x = x.estimates
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != net.n:
        raise LengthMismatch(f"network has {net.n} agents but got {x.shape[0]} estimates")
    return x


def step(net: InfluenceNetwork, estimates) -> np.ndarray:
    """One synchronous revision: every agent takes its row-weighted average."""
    return net.weights @ _estimates(net, estimates)


def run_rounds(net: InfluenceNetwork, state, rounds: int) -> Trajectory:
    if rounds < 0:
        raise OutOfRange("rounds must be non-negative")
    x0 = _estimates(net, state)
    states = kernels.propagate(net.weights, np.ascontiguousarray(x0), int(rounds))
    states.flags.writeable = False
    return Trajectory(states)


def converge(net: InfluenceNetwork, state, tol: float = DEFAULT_TOL, max_rounds: int = DEFAULT_MAX_ROUNDS) -> float:
    """Iterate to consensus and return the common value.

    Stops once the spread ``max(x) - min(x)`` is at most ``tol``.  The limit is
    the centrality-weighted mean of the initial estimates.  For estimates so
    large that ``tol`` is below float resolution, the tolerance is floored at
    64 ulps of the largest magnitude.
    """
    x0 = _estimates(net, state)
    if np.ptp(x0) <= tol:
        return float(0.5 * (x0.max() + x0.min()))
    if not is_ergodic(net):
        raise NotErgodic("consensus needs a single aperiodic closed class")
    scale = float(np.max(np.abs(x0)))
    eff = max(tol, 64.0 * np.finfo(np.float64).eps * scale)
    x, rounds, ok = kernels.consensus(net.weights, np.ascontiguousarray(x0), eff, int(max_rounds))
    if not ok:
        raise NoConvergence(f"no consensus after {rounds} rounds (spread {np.ptp(x):.3g})")
    return float(0.5 * (x.max() + x.min()))


def group_error(estimates, truth: float) -> float:
    """Distance between the mean estimate and the truth."""
    x = np.asarray(estimates, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("group error of an empty vector")
    return abs(float(x.mean()) - truth)


def improvement(pre, post, truth: float) -> Outcome:
    """Did the group mean get closer to the truth? Errors within 1e-12 tie."""
    before = group_error(pre, truth)
    after = group_error(post, truth)
    if abs(after - before) <= TIE_TOL:
        return Outcome.UNCHANGED
    return Outcome.IMPROVED if after < before else Outcome.WORSENED
