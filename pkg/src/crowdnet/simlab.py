"""Monte-Carlo trials of group estimation under numeric exchange or discussion.

A trial draws independent estimates, builds a condition-specific influence
network, runs DeGroot revision and scores whether the group mean moved
closer to the truth.

* ``delphi`` (numeric exchange): everyone weighs peers equally; agents differ
  only in stubbornness, drawn in ``stubbornness_range`` and rank-coupled to
  each agent's initial error through a Gaussian copula with correlation
  ``stubbornness_error_rho``.  Runs a fixed number of rounds.
* ``discussion``: peers are weighted by talkativeness (message counts drawn
  independently of the estimates), or, with ``discussion_network="star"``,
  the most talkative member becomes the hub of a star and gets influence C
  drawn below its overshoot bound C'.  Runs to consensus.

Each trial owns its random streams, derived only from its seed, so
ensembles are reproducible under any execution order.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special, stats

from . import dynamics, heuristic, netcore, statkit
from .errors import AllZero, BadDistributionParams
from .heuristic import Label

CONDITIONS = ("delphi", "discussion")
SWEEP_AXES = ("phi_bucket", "rho", "centralization")
MAX_REJECTIONS = 100_000
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Distribution:
    """Tagged parameter set: ``lognormal(mu, sigma)``, ``normal(mu, sigma)``
    or ``empirical(values...)`` (resampled with replacement)."""

    kind: str
    params: tuple

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if self.kind in ("lognormal", "normal"):
            if len(params) != 2:
                raise BadDistributionParams(f"{self.kind} takes (mu, sigma), got {params}")
            if not all(math.isfinite(p) for p in params) or params[1] < 0:
                raise BadDistributionParams(f"{self.kind} needs finite mu and sigma >= 0")
        elif self.kind == "empirical":
            if not params or not all(math.isfinite(p) for p in params):
                raise BadDistributionParams("empirical distribution needs finite values")
        else:
            raise BadDistributionParams(f"unknown distribution {self.kind!r}")

    @classmethod
    def lognormal(cls, mu, sigma):
        return cls("lognormal", (mu, sigma))

    @classmethod
    def normal(cls, mu, sigma):
        return cls("normal", (mu, sigma))

    @classmethod
    def empirical(cls, values):
        return cls("empirical", tuple(values))

    @classmethod
    def parse(cls, text: str) -> Distribution:
        """Parse ``kind:a,b,...`` e.g. ``lognormal:4.6,1``."""
        kind, _, rest = text.partition(":")
        try:
            params = tuple(float(p) for p in rest.split(",") if p.strip())
        except ValueError as exc:
            raise BadDistributionParams(f"cannot parse distribution {text!r}") from exc
        return cls(kind.strip(), params)

    def __str__(self):
        return f"{self.kind}:" + ",".join(repr(p) for p in self.params)

    def draw(self, rng, size, shift=0.0):
        if self.kind == "lognormal":
            return rng.lognormal(self.params[0] + shift, self.params[1], size)
        if self.kind == "normal":
            return rng.normal(self.params[0] + shift, self.params[1], size)
        return np.asarray(self.params)[rng.integers(0, len(self.params), size)] + shift


def _default_estimates():
    return Distribution.lognormal(math.log(100.0), 1.0)


def _default_talkativeness():
    return Distribution.lognormal(0.0, 1.0)


@dataclass(frozen=True)
class TrialSpec:
    group_size: int = 20
    condition: str = "discussion"
    estimate_distribution: Distribution = field(default_factory=_default_estimates)
    truth: float = 100.0
    rounds: int = 4
    stubbornness_error_rho: float = 0.0
    stubbornness_range: tuple = (0.1, 0.9)
    talkativeness_distribution: Distribution = field(default_factory=_default_talkativeness)
    # simulated message count = round(message_scale * talkativeness draw)
    message_scale: float = 10.0
    self_weight: float = 0.5
    seed: int = 0
    discussion_network: str = "talkativeness"
    influence_cap: float = 0.9
    # condition estimate draws on phi == phi_target (nearest k/n)
    phi_target: float | None = None
    # sd of a per-trial shift of the estimate distribution's location
    location_jitter: float = 0.0

    def __post_init__(self):
        if self.group_size < 2:
            raise BadDistributionParams("group_size must be at least 2")
        if self.condition not in CONDITIONS:
            raise BadDistributionParams(f"condition must be one of {CONDITIONS}")
        if self.condition == "delphi" and self.rounds < 1:
            raise BadDistributionParams("delphi needs at least one revision round")
        if not -1.0 <= self.stubbornness_error_rho <= 1.0:
            raise BadDistributionParams("stubbornness_error_rho must lie in [-1, 1]")
        lo, hi = self.stubbornness_range
        if not 0.0 <= lo <= hi < 1.0:
            raise BadDistributionParams("stubbornness_range must satisfy 0 <= lo <= hi < 1")
        if not 0.0 <= self.self_weight < 1.0:
            raise BadDistributionParams("self_weight must lie in [0, 1)")
        if self.discussion_network not in ("talkativeness", "star"):
            raise BadDistributionParams("discussion_network must be 'talkativeness' or 'star'")
        if self.discussion_network == "star" and self.group_size < 3:
            raise BadDistributionParams("star networks need group_size >= 3")
        if not 1.0 / self.group_size < self.influence_cap < 1.0:
            raise BadDistributionParams("influence_cap must lie in (1/n, 1)")
        if self.phi_target is not None and not 0.0 <= self.phi_target <= 1.0:
            raise BadDistributionParams("phi_target must lie in [0, 1]")
        if self.location_jitter < 0:
            raise BadDistributionParams("location_jitter must be >= 0")
        if self.message_scale <= 0:
            raise BadDistributionParams("message_scale must be positive")
        object.__setattr__(self, "stubbornness_range", (float(lo), float(hi)))

    def streams(self):
        """Independent generators for (estimates, influence)."""
        seq = np.random.SeedSequence(int(self.seed) & _MASK64)
        return tuple(np.random.default_rng(s) for s in seq.spawn(2))


@dataclass(frozen=True)
class InfluenceAssignment:
    network: netcore.InfluenceNetwork
    stubbornness: np.ndarray | None = None
    talkativeness: np.ndarray | None = None
    hub: int | None = None
    hub_influence: float | None = None


@dataclass(frozen=True, eq=False)
class TrialRecord:
    spec: TrialSpec
    index: int
    states: np.ndarray
    phi: heuristic.PhiSummary
    outcome: dynamics.Outcome
    gini_influence: float
    top_influencer_toward: bool
    stubbornness: np.ndarray | None = None
    talkativeness: np.ndarray | None = None
    hub: int | None = None
    hub_influence: float | None = None

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def condition(self) -> str:
        return self.spec.condition

    @property
    def truth(self) -> float:
        return self.spec.truth

    @property
    def pre_estimates(self) -> np.ndarray:
        return self.states[0]

    @property
    def post_estimates(self) -> np.ndarray:
        return self.states[-1]


# -- seeding ----------------------------------------------------------------

def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(base_seed: int, index: int) -> int:
    return splitmix64((int(base_seed) + int(index)) & _MASK64)


# -- generative pieces ------------------------------------------------------

def _draw_once(spec, rng):
    shift = rng.normal(0.0, spec.location_jitter) if spec.location_jitter > 0 else 0.0
    return spec.estimate_distribution.draw(rng, spec.group_size, shift)


def sample_estimates(spec: TrialSpec, rng) -> np.ndarray:
    """Draw ``group_size`` independent estimates.

    With ``phi_target`` set, draws are rejected until phi hits the target
    (rounded to the nearest attainable ``k/n``); degenerate draws never match.
    """
    if spec.phi_target is None:
        return _draw_once(spec, rng)
    n = spec.group_size
    want = round(spec.phi_target * n)
    for _ in range(MAX_REJECTIONS):
        x = _draw_once(spec, rng)
        summary = heuristic.phi(x, spec.truth)
        if not summary.degenerate and round(summary.phi * n) == want:
            return x
    raise BadDistributionParams(
        f"phi={want}/{n} not reached in {MAX_REJECTIONS} draws; widen the distribution or add location_jitter"
    )


def _copula_stubbornness(spec, estimates, rng):
    n = estimates.shape[0]
    lo, hi = spec.stubbornness_range
    if lo == hi:
        return np.full(n, lo)
    rho = spec.stubbornness_error_rho
    errors = np.abs(estimates - spec.truth)
    scores = special.ndtri((stats.rankdata(errors, method="average") - 0.5) / n)
    noise = rng.standard_normal(n)
    latent = rho * scores + math.sqrt(max(0.0, 1.0 - rho * rho)) * noise
    return lo + (hi - lo) * special.ndtr(latent)


def _message_counts(spec, rng):
    for _ in range(100):
        t = np.rint(spec.message_scale * spec.talkativeness_distribution.draw(rng, spec.group_size))
        t = np.clip(t, 0.0, None)
        if np.any(t > 0):
            return t
    raise BadDistributionParams("talkativeness distribution keeps producing all-silent groups")


def _star_assignment(spec, estimates, rng):
    # the most talkative member becomes the hub; counts are independent of
    # the estimates, so the hub's position is uniform over the group
    n = spec.group_size
    t = _message_counts(spec, rng)
    hub = int(np.argmax(t))
    g = heuristic.ReducedGroup.from_estimates(estimates, hub, 1.0 / n, spec.truth)
    upper = spec.influence_cap
    if g.high_estimate != g.low_mean:
        crit = heuristic.critical_c(g)
        if crit.improvable:
            upper = min(upper, crit.unclamped)
    c = float(rng.uniform(1.0 / n, upper))
    net = netcore.star_with_influence(n, max(c, 1.0 / n))
    order = np.arange(n)
    order[0], order[hub] = hub, 0
    return InfluenceAssignment(net.permuted(order), talkativeness=t, hub=hub, hub_influence=c)


def assign_influence(spec: TrialSpec, estimates, rng) -> InfluenceAssignment:
    x = np.asarray(estimates, dtype=np.float64)
    if x.shape[0] != spec.group_size:
        raise BadDistributionParams(f"expected {spec.group_size} estimates, got {x.shape[0]}")
    if spec.condition == "delphi":
        s = _copula_stubbornness(spec, x, rng)
        return InfluenceAssignment(netcore.stubbornness_network(s), stubbornness=s)
    if spec.discussion_network == "star":
        return _star_assignment(spec, x, rng)
    t = _message_counts(spec, rng)
    try:
        net = netcore.talkativeness_network(t, spec.self_weight)
    except AllZero as exc:  # pragma: no cover - guarded by _message_counts
        raise BadDistributionParams(str(exc)) from exc
    return InfluenceAssignment(net, talkativeness=t)


def run_trial(spec: TrialSpec, index: int = 0) -> TrialRecord:
    rng_est, rng_inf = spec.streams()
    x0 = sample_estimates(spec, rng_est)
    assignment = assign_influence(spec, x0, rng_inf)
    net = assignment.network
    if spec.condition == "delphi":
        states = dynamics.run_rounds(net, x0, spec.rounds).states
    else:
        consensus = dynamics.converge(net, x0)
        states = np.vstack([x0, np.full(spec.group_size, consensus)])
        states.flags.writeable = False
    summary = heuristic.phi(x0, spec.truth)
    outcome = dynamics.improvement(states[0], states[-1], spec.truth)
    profile = netcore.centrality(net, netcore.ASYMPTOTIC)
    top = profile.top()
    mu = float(x0.mean())
    side = np.sign(spec.truth - mu)
    toward = bool(side != 0 and np.sign(x0[top] - mu) == side)
    return TrialRecord(
        spec=spec,
        index=index,
        states=states,
        phi=summary,
        outcome=outcome,
        gini_influence=netcore.centralization(profile),
        top_influencer_toward=toward,
        stubbornness=assignment.stubbornness,
        talkativeness=assignment.talkativeness,
        hub=assignment.hub,
        hub_influence=assignment.hub_influence,
    )


def _run_indexed(args):
    spec, index = args
    return run_trial(spec, index)


# -- ensembles --------------------------------------------------------------

@dataclass(frozen=True)
class BucketStats:
    trials: int
    improved: int
    worsened: int
    unchanged: int
    test: statkit.ProportionTestResult | None

    @property
    def proportion(self) -> float | None:
        return self.improved / self.trials if self.trials else None

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "improved": self.improved,
            "worsened": self.worsened,
            "unchanged": self.unchanged,
            "proportion_improved": self.proportion,
            "test_vs_half": self.test.to_json() if self.test else None,
        }


def bucket_stats(records) -> BucketStats:
    outcomes = [r.outcome for r in records]
    improved = sum(o is dynamics.Outcome.IMPROVED for o in outcomes)
    worsened = sum(o is dynamics.Outcome.WORSENED for o in outcomes)
    n = len(outcomes)
    test = statkit.proportion_test(improved, n, 0.5) if n else None
    return BucketStats(n, improved, worsened, n - improved - worsened, test)


@dataclass(frozen=True, eq=False)
class EnsembleReport:
    spec: TrialSpec
    base_seed: int
    records: tuple

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def improved(self) -> int:
        return sum(r.outcome is dynamics.Outcome.IMPROVED for r in self.records)

    @property
    def proportion(self) -> float:
        return self.improved / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return statkit.clopper_pearson(self.improved, self.trials)

    @property
    def mean_phi(self) -> float:
        return float(np.mean([r.phi.phi for r in self.records]))

    def bucket(self, label: Label) -> BucketStats:
        return bucket_stats([r for r in self.records if r.phi.label is label])

    @property
    def buckets(self) -> dict:
        return {label: self.bucket(label) for label in Label}

    def toward_vs_away(self) -> statkit.ProportionTestResult | None:
        t, a = self.bucket(Label.TOWARD), self.bucket(Label.AWAY)
        if not t.trials or not a.trials:
            return None
        return statkit.proportion_test_2(t.improved, t.trials, a.improved, a.trials)

    def phi_slope(self, clusters=None) -> statkit.LogisticFit:
        """Logistic fit of improvement on phi over the ensemble's trials."""
        phis = np.array([r.phi.phi for r in self.records])
        y = np.array([r.outcome is dynamics.Outcome.IMPROVED for r in self.records], dtype=float)
        X = np.column_stack([np.ones_like(phis), phis])
        return statkit.logistic_fit(X, y, clusters, names=("intercept", "phi"))

    def to_json(self) -> dict:
        lo, hi = self.interval
        tva = self.toward_vs_away()
        return {
            "condition": self.spec.condition,
            "base_seed": self.base_seed,
            "trials": self.trials,
            "improved": self.improved,
            "proportion_improved": self.proportion,
            "ci95": [lo, hi],
            "ci_method": "clopper-pearson exact binomial",
            "mean_phi": self.mean_phi,
            "mean_gini_influence": float(np.mean([r.gini_influence for r in self.records])),
            "buckets": {label.value: stats_.to_json() for label, stats_ in self.buckets.items()},
            "toward_vs_away": tva.to_json() if tva else None,
        }


def _run_range(spec, base_seed, start, stop, workers):
    jobs = [(replace(spec, seed=trial_seed(base_seed, i)), i) for i in range(start, stop)]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_indexed, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_run_indexed(job) for job in jobs]


def run_ensemble(spec: TrialSpec, trials: int, base_seed: int | None = None, workers: int = 1) -> EnsembleReport:
    """Run ``trials`` independent trials; trial ``i`` is seeded from ``(base_seed, i)``.

    Records come back in trial order whatever ``workers`` is, so reports are
    identical between serial and parallel runs.
    """
    if trials < 1:
        raise BadDistributionParams("trials must be at least 1")
    if base_seed is None:
        base_seed = spec.seed
    records = _run_range(spec, base_seed, 0, trials, workers)
    return EnsembleReport(spec, int(base_seed), tuple(records))


def run_until_cells(
    spec: TrialSpec,
    per_cell: int,
    base_seed: int | None = None,
    workers: int = 1,
    labels=(Label.TOWARD, Label.AWAY),
    max_trials: int = 1_000_000,
) -> EnsembleReport:
    """Extend an ensemble in trial order until every label in ``labels`` has
    at least ``per_cell`` trials."""
    if base_seed is None:
        base_seed = spec.seed
    records = []
    counts = dict.fromkeys(labels, 0)
    while min(counts.values()) < per_cell:
        if len(records) >= max_trials:
            raise BadDistributionParams(f"cells still short after {max_trials} trials: {counts}")
        batch = _run_range(spec, base_seed, len(records), len(records) + per_cell, workers)
        for r in batch:
            if r.phi.label in counts:
                counts[r.phi.label] += 1
        records.extend(batch)
    return EnsembleReport(spec, int(base_seed), tuple(records))


def spec_for_level(spec: TrialSpec, axis: str, level: float) -> TrialSpec:
    """Apply one sweep level to a template spec.

    ``centralization`` means: talkativeness log-sd for talkativeness
    discussions, the hub-influence cap for star discussions, and the width of
    the stubbornness range (centered on 0.5) for delphi.
    """
    if axis == "phi_bucket":
        return replace(spec, phi_target=float(level))
    if axis == "rho":
        return replace(spec, stubbornness_error_rho=float(level))
    if axis == "centralization":
        if spec.condition == "delphi":
            half = float(level) / 2.0
            return replace(spec, stubbornness_range=(0.5 - half, 0.5 + half))
        if spec.discussion_network == "star":
            return replace(spec, influence_cap=float(level))
        talk = spec.talkativeness_distribution
        if talk.kind != "lognormal":
            raise BadDistributionParams("centralization sweep needs a lognormal talkativeness distribution")
        return replace(spec, talkativeness_distribution=Distribution.lognormal(talk.params[0], float(level)))
    raise BadDistributionParams(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def sweep(spec: TrialSpec, axis: str, levels, trials: int, base_seed: int | None = None, workers: int = 1) -> list:
    """One ensemble per level, all levels sharing the same trial seeds."""
    levels = list(levels)
    if not levels:
        raise BadDistributionParams("sweep needs at least one level")
    specs = [spec_for_level(spec, axis, lv) for lv in levels]
    return [run_ensemble(s, trials, base_seed, workers) for s in specs]


def sweep_table(reports, axis: str, levels) -> list:
    """Tidy rows (one per level x bucket) for plotting or regression."""
    rows = []
    for level, rep in zip(levels, reports):
        groups = [("all", bucket_stats(rep.records))]
        groups += [(lb.value, rep.bucket(lb)) for lb in Label]
        for name, b in groups:
            rows.append(
                {
                    "axis": axis,
                    "level": float(level),
                    "condition": rep.spec.condition,
                    "bucket": name,
                    "trials": b.trials,
                    "improved": b.improved,
                    "unchanged": b.unchanged,
                    "proportion_improved": b.proportion,
                    "mean_phi": rep.mean_phi,
                }
            )
    return rows


def empirical_stubbornness(pre: float, post: float, peer_mean: float) -> float | None:
    """Share of the gap to the peer mean an agent refused to close, in [0, 1].

    ``None`` when the agent already sat on the peer mean.
    """
    gap = peer_mean - pre
    if abs(gap) < 1e-12:
        return None
    return min(1.0, max(0.0, 1.0 - (post - pre) / gap))
