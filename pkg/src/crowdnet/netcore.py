"""Weighted influence networks, centrality and centralization.

Row ``i`` of the weight matrix holds the weights agent ``i`` places on every
member of the group, itself included (the diagonal is the self-weight, i.e.
stubbornness).  Rows are stochastic, so one revision round is ``x <- W x``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import statkit
from ._backend import kernels
from .errors import (
    AllZero,
    NegativeWeight,
    NoConvergence,
    NonStochasticRow,
    NotErgodic,
    TooSmall,
    WeightOutOfRange,
)

INPUT_TOL = 1e-9
INVARIANT_TOL = 1e-12
POWER_TOL = 1e-13
POWER_MAX_ITER = 100_000

ONE_STEP = "one-step"
ASYMPTOTIC = "asymptotic"


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class InfluenceNetwork:
    """Validated row-stochastic influence matrix. Build with :func:`build_network`."""

    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def self_weights(self) -> np.ndarray:
        return np.diag(self.weights).copy()

    def permuted(self, order) -> InfluenceNetwork:
        """Relabel agents so that new agent ``k`` is old agent ``order[k]``."""
        order = np.asarray(order)
        return InfluenceNetwork(_frozen(self.weights[np.ix_(order, order)]))

    def to_json(self) -> dict:
        return {"n": self.n, "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj) -> InfluenceNetwork:
        if isinstance(obj, str):
            obj = json.loads(obj)
        net = build_network(obj["weights"])
        if int(obj.get("n", net.n)) != net.n:
            raise TooSmall(f"declared n={obj['n']} but matrix is {net.n}x{net.n}")
        return net

    def __eq__(self, other):
        if not isinstance(other, InfluenceNetwork):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CentralityProfile:
    scores: np.ndarray
    kind: str

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def top(self) -> int:
        """Index of the most central agent (lowest index on ties)."""
        return int(np.argmax(self.scores))


def build_network(weights) -> InfluenceNetwork:
    """Validate a weight matrix and return it as an :class:`InfluenceNetwork`.

    Rows within ``1e-9`` of summing to one are renormalized; anything further
    off is rejected.
    """
    w = np.array(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise TooSmall(f"weights must be a square matrix, got shape {w.shape}")
    if w.shape[0] < 2:
        raise TooSmall("an influence network needs at least 2 agents")
    if not np.all(np.isfinite(w)):
        raise NonStochasticRow("weights contain non-finite entries")
    if np.any(w < 0):
        i, j = np.argwhere(w < 0)[0]
        raise NegativeWeight(f"negative weight {w[i, j]!r} at ({i}, {j})")
    sums = w.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > INPUT_TOL)
    if bad.size:
        i = bad[0]
        raise NonStochasticRow(f"row {i} sums to {sums[i]!r}")
    w /= sums[:, None]
    return InfluenceNetwork(_frozen(w))


def _check_unit(name, value, upper_open=False):
    hi_ok = value < 1.0 if upper_open else value <= 1.0
    if not (0.0 <= value and hi_ok):
        bound = "[0, 1)" if upper_open else "[0, 1]"
        raise WeightOutOfRange(f"{name}={value!r} outside {bound}")


def star_network(n: int, peripheral_self_weight: float, center_self_weight: float) -> InfluenceNetwork:
    """Star with agent 0 at the center.

    Peripherals split their weight between themselves and the center; the
    center spreads its non-self weight evenly over the peripherals.
    """
    if n < 3:
        raise TooSmall("a star network needs n >= 3")
    _check_unit("peripheral_self_weight", peripheral_self_weight)
    _check_unit("center_self_weight", center_self_weight)
    w = np.zeros((n, n))
    w[0, 0] = center_self_weight
    w[0, 1:] = (1.0 - center_self_weight) / (n - 1)
    idx = np.arange(1, n)
    w[idx, idx] = peripheral_self_weight
    w[idx, 0] = 1.0 - peripheral_self_weight
    return build_network(w)


def star_with_influence(n: int, influence: float, center_self_weight: float | None = None) -> InfluenceNetwork:
    """Star network whose center has asymptotic centrality ``influence``.

    The center's share is ``(1-b)/(2-a-b)`` for center self-weight ``a`` and
    peripheral self-weight ``b``; this solves for ``b`` given ``a``.  When
    ``center_self_weight`` is omitted a feasible ``a`` is chosen.
    """
    if n < 3:
        raise TooSmall("a star network needs n >= 3")
    if not (1.0 / n - INVARIANT_TOL <= influence < 1.0):
        raise WeightOutOfRange(f"influence={influence!r} outside [1/n, 1)")
    c = max(influence, 1.0 / n)
    lower = 2.0 - 1.0 / c
    if center_self_weight is None:
        a = 0.5 if lower <= 0.0 else 0.5 * (1.0 + lower)
    else:
        a = center_self_weight
        _check_unit("center_self_weight", a, upper_open=True)
        if a < lower:
            raise WeightOutOfRange(f"center_self_weight={a!r} cannot reach influence {c!r} (needs >= {lower!r})")
    b = (1.0 - 2.0 * c + a * c) / (1.0 - c)
    return star_network(n, min(max(b, 0.0), 1.0), a)


def uniform_network(n: int, self_weight: float) -> InfluenceNetwork:
    if n < 2:
        raise TooSmall("an influence network needs at least 2 agents")
    _check_unit("self_weight", self_weight, upper_open=True)
    w = np.full((n, n), (1.0 - self_weight) / (n - 1))
    np.fill_diagonal(w, self_weight)
    return build_network(w)


def stubbornness_network(self_weights) -> InfluenceNetwork:
    """Each agent keeps its own self-weight and splits the rest evenly over peers."""
    s = np.asarray(self_weights, dtype=np.float64)
    n = s.shape[0]
    if n < 2:
        raise TooSmall("an influence network needs at least 2 agents")
    for value in s:
        _check_unit("self_weight", float(value))
    w = np.repeat(((1.0 - s) / (n - 1))[:, None], n, axis=1)
    np.fill_diagonal(w, s)
    return build_network(w)


def talkativeness_network(talkativeness, self_weight: float) -> InfluenceNetwork:
    """Peer weight proportional to how much each peer talks.

    Silent agents get no peer weight.  An agent whose peers are all silent
    keeps its whole weight on itself.
    """
    t = np.asarray(talkativeness, dtype=np.float64)
    n = t.shape[0]
    if n < 2:
        raise TooSmall("an influence network needs at least 2 agents")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise NegativeWeight("talkativeness must be finite and non-negative")
    if not np.any(t > 0):
        raise AllZero("every talkativeness value is zero")
    _check_unit("self_weight", self_weight, upper_open=True)
    w = np.zeros((n, n))
    total = t.sum()
    for i in range(n):
        peers = total - t[i]
        if peers <= 0:
            w[i, i] = 1.0
            continue
        w[i] = (1.0 - self_weight) * t / peers
        w[i, i] = self_weight
    return build_network(w)


def is_ergodic(net: InfluenceNetwork) -> bool:
    """True when the chain has a unique, aperiodic limiting distribution.

    Sufficient test: exactly one closed strongly connected class of the
    positive-weight pattern, and that class contains a positive self-weight.
    Agents outside the closed class (e.g. silent ones nobody listens to) are
    transient and end with zero centrality.
    """
    pattern = net.weights > 0
    ncomp, labels = connected_components(pattern, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = labels == c
        if not pattern[np.ix_(members, ~members)].any():
            closed.append(members)
    if len(closed) != 1:
        return False
    members = closed[0]
    return bool(np.any(np.diag(net.weights)[members] > 0))


def centrality(net: InfluenceNetwork, kind: str = ASYMPTOTIC) -> CentralityProfile:
    if kind == ONE_STEP:
        scores = net.weights.sum(axis=0) / net.n
        return CentralityProfile(_frozen(scores), ONE_STEP)
    if kind != ASYMPTOTIC:
        raise ValueError(f"unknown centrality kind {kind!r}")
    if not is_ergodic(net):
        raise NotErgodic("asymptotic centrality needs a single aperiodic closed class")
    v, iters, ok = kernels.left_fixed_vector(net.weights, POWER_TOL, POWER_MAX_ITER)
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    residual = np.max(np.abs(v @ net.weights - v))
    if not ok or residual > INVARIANT_TOL:
        raise NoConvergence(f"power iteration stopped after {iters} steps, residual {residual:.3g}")
    return CentralityProfile(_frozen(v), ASYMPTOTIC)


def centralization(profile: CentralityProfile) -> float:
    """Gini coefficient of the centrality scores."""
    return statkit.gini(profile.scores)
