"""The phi heuristic and the two-point (one hub, N-1 peers) reduced model.

``phi`` is the share of the group whose estimate sits on the same side of
the mean as the truth.  If influence lands on a uniformly random member and
the hub never pulls the mean past the truth, the probability that a
centralized group improves is exactly ``phi``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGroup, EmptyInput, OutOfRange

BOUNDARY_TOL = 1e-12


class Label(str, enum.Enum):
    TOWARD = "Toward"
    AWAY = "Away"
    SPLIT = "Split"


class Prediction(str, enum.Enum):
    IMPROVES = "Improves"
    WORSENS = "Worsens"
    BOUNDARY = "Boundary"


class RulePrediction(str, enum.Enum):
    EXPECT_IMPROVE = "ExpectImprove"
    EXPECT_WORSEN = "ExpectWorsen"
    NO_PREDICTION = "NoPrediction"


def label_for(phi_value: float) -> Label:
    if phi_value > 0.5:
        return Label.TOWARD
    if phi_value < 0.5:
        return Label.AWAY
    return Label.SPLIT


@dataclass(frozen=True)
class PhiSummary:
    phi: float
    label: Label
    degenerate: bool = False


def _truth_at_mean(mu, truth, x):
    scale = max(1.0, abs(truth), float(np.max(np.abs(x))))
    return abs(truth - mu) <= 1e-12 * scale


def phi(estimates, truth: float) -> PhiSummary:
    x = np.asarray(estimates, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("phi of an empty vector")
    mu = float(x.mean())
    if _truth_at_mean(mu, truth, x):
        return PhiSummary(0.5, Label.SPLIT, degenerate=True)
    side = np.sign(truth - mu)
    value = float(np.count_nonzero(np.sign(x - mu) == side)) / x.size
    return PhiSummary(value, label_for(value))


def phi_rule(summary: PhiSummary) -> RulePrediction:
    if summary.degenerate or summary.label is Label.SPLIT:
        return RulePrediction.NO_PREDICTION
    if summary.label is Label.TOWARD:
        return RulePrediction.EXPECT_IMPROVE
    return RulePrediction.EXPECT_WORSEN


@dataclass(frozen=True)
class ReducedGroup:
    """One hub with estimate ``high_estimate`` and ``n-1`` peers averaging ``low_mean``.

    ``influence`` is the hub's share of the post-communication mean (C).
    """

    n: int
    high_estimate: float
    low_mean: float
    influence: float
    truth: float

    def __post_init__(self):
        if self.n < 2:
            raise OutOfRange("a reduced group needs n >= 2")
        lo = 1.0 / self.n
        if not (lo - BOUNDARY_TOL <= self.influence <= 1.0 + BOUNDARY_TOL):
            raise OutOfRange(f"influence {self.influence!r} outside [1/n, 1]")

    @classmethod
    def from_estimates(cls, estimates, high_index: int, influence: float, truth: float) -> ReducedGroup:
        x = np.asarray(estimates, dtype=np.float64).ravel()
        if x.size < 2:
            raise OutOfRange("a reduced group needs n >= 2")
        others = np.delete(x, high_index)
        return cls(x.size, float(x[high_index]), float(others.mean()), influence, truth)

    def with_influence(self, influence: float) -> ReducedGroup:
        return ReducedGroup(self.n, self.high_estimate, self.low_mean, influence, self.truth)

    @property
    def mu_pre(self) -> float:
        return self.high_estimate / self.n + (self.n - 1) * self.low_mean / self.n

    @property
    def mu_post(self) -> float:
        c = self.influence
        if c == 1.0 / self.n:
            return self.mu_pre
        return c * self.high_estimate + (1.0 - c) * self.low_mean

    @property
    def hub_toward_truth(self) -> bool:
        """Hub and truth lie strictly on the same side of the pre-communication mean."""
        mu = self.mu_pre
        return np.sign(self.high_estimate - mu) == np.sign(self.truth - mu) != 0


def project_means(g: ReducedGroup) -> tuple[float, float]:
    return g.mu_pre, g.mu_post


def omega_c_convert(n: int, value: float, direction: str) -> float:
    """Map the centralization weight omega to the hub influence C, or back.

    ``C = 1/n + (n-1)/n * omega``.
    """
    if n < 2:
        raise OutOfRange("n must be at least 2")
    if direction == "omega_to_c":
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(f"omega={value!r} outside [0, 1]")
        return 1.0 / n + (n - 1) / n * value
    if direction == "c_to_omega":
        if not 1.0 / n - BOUNDARY_TOL <= value <= 1.0:
            raise OutOfRange(f"C={value!r} outside [1/n, 1]")
        return min(1.0, max(0.0, (value - 1.0 / n) * n / (n - 1)))
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class CriticalInfluence:
    """Hub influence C' beyond which the group overshoots the truth.

    ``value`` is clamped to ``[1/n, 1]``; ``unclamped`` keeps the raw
    boundary (above 1 means every admissible C improves).  Both are ``None``
    when the hub does not point toward the truth, i.e. no C improves.
    """

    value: float | None
    unclamped: float | None

    @property
    def improvable(self) -> bool:
        return self.value is not None

    @property
    def always_improves(self) -> bool:
        return self.unclamped is not None and self.unclamped >= 1.0


NO_IMPROVEMENT = CriticalInfluence(None, None)


def critical_c(g: ReducedGroup) -> CriticalInfluence:
    if g.high_estimate == g.low_mean:
        raise DegenerateGroup("hub and peers agree; influence has no effect")
    if not g.hub_toward_truth:
        return NO_IMPROVEMENT
    raw = 1.0 / g.n + 2.0 * (g.truth - g.mu_pre) / (g.high_estimate - g.low_mean)
    return CriticalInfluence(min(1.0, max(1.0 / g.n, raw)), raw)


def predict_outcome(g: ReducedGroup) -> Prediction:
    crit = critical_c(g)
    c = g.influence
    if abs(c - 1.0 / g.n) <= BOUNDARY_TOL:
        return Prediction.BOUNDARY
    if not crit.improvable:
        return Prediction.WORSENS
    if abs(c - crit.unclamped) <= BOUNDARY_TOL:
        return Prediction.BOUNDARY
    return Prediction.IMPROVES if c < crit.unclamped else Prediction.WORSENS
