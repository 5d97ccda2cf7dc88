"""Small self-contained statistics toolbox.

Gini coefficient, one/two-sample proportion tests, logistic regression by
IRLS with optional cluster-robust covariance, rank quartiles and Pearson
correlation.  P-values are two-sided throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from ._backend import kernels
from .errors import (
    AllZero,
    EmptyInput,
    LengthMismatch,
    NoConvergence,
    OutOfRange,
    Separation,
    Singular,
    TooFew,
    ZeroVariance,
)

EXACT_MAX_TRIALS = 200
# tolerance R's binom.test uses when collecting "as or less likely" outcomes
_RELATIVE_ERROR = 1.0 + 1e-7


def gini(values) -> float:
    """Gini coefficient ``sum_ij |x_i - x_j| / (2 n^2 mean)``.

    Zeros are part of the population and count toward inequality.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("gini of an empty vector")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise OutOfRange("gini needs finite non-negative values")
    if not np.any(x > 0):
        raise AllZero("gini is undefined when every value is zero")
    return max(float(kernels.gini(x)), 0.0)


# -- proportion tests -------------------------------------------------------

@dataclass(frozen=True)
class ProportionTestResult:
    successes: int
    trials: int
    p_value: float
    method: str
    null_p: float | None = None
    successes2: int | None = None
    trials2: int | None = None
    statistic: float | None = None

    @property
    def estimate(self) -> float:
        return self.successes / self.trials

    @property
    def estimate2(self) -> float | None:
        if self.trials2 is None:
            return None
        return self.successes2 / self.trials2

    @property
    def difference(self) -> float | None:
        if self.trials2 is None:
            return None
        return self.estimate - self.estimate2

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "successes": self.successes,
            "trials": self.trials,
            "estimate": self.estimate,
            "p_value": self.p_value,
        }
        if self.null_p is not None:
            out["null_p"] = self.null_p
        if self.trials2 is not None:
            out.update(
                successes2=self.successes2,
                trials2=self.trials2,
                estimate2=self.estimate2,
                difference=self.difference,
            )
        if self.statistic is not None:
            out["statistic"] = self.statistic
        return out


def binom_pmf(k: int, n: int, p: float) -> float:
    if k < 0 or k > n:
        return 0.0
    logc = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(logc + k * math.log(p) + (n - k) * math.log1p(-p))


def exact_binomial_pvalue(successes: int, trials: int, null_p: float) -> float:
    """Two-sided exact p-value: total mass of outcomes no more likely than observed."""
    d = binom_pmf(successes, trials, null_p) * _RELATIVE_ERROR
    total = 0.0
    for i in range(trials + 1):
        q = binom_pmf(i, trials, null_p)
        if q <= d:
            total += q
    return min(1.0, total)


def _chi2_1_sf(x: float) -> float:
    return math.erfc(math.sqrt(max(x, 0.0) / 2.0))


def _validate_counts(successes, trials):
    if int(trials) != trials or trials < 1:
        raise OutOfRange(f"trials must be a positive integer, got {trials!r}")
    if int(successes) != successes or not 0 <= successes <= trials:
        raise OutOfRange(f"successes must be an integer in [0, {trials}], got {successes!r}")


def proportion_test(successes: int, trials: int, null_p: float = 0.5, method: str = "auto") -> ProportionTestResult:
    """One-sample test of ``successes/trials`` against ``null_p``.

    ``method="auto"`` uses the exact binomial test up to 200 trials and the
    continuity-corrected normal approximation above that.
    """
    _validate_counts(successes, trials)
    if not 0.0 < null_p < 1.0:
        raise OutOfRange(f"null_p must lie in (0, 1), got {null_p!r}")
    successes, trials = int(successes), int(trials)
    if method == "auto":
        method = "exact-binomial" if trials <= EXACT_MAX_TRIALS else "normal-approx"
    if method == "exact-binomial":
        p = exact_binomial_pvalue(successes, trials, null_p)
        return ProportionTestResult(successes, trials, p, method, null_p=null_p)
    if method != "normal-approx":
        raise ValueError(f"unknown method {method!r}")
    expected = trials * null_p
    dev = abs(successes - expected)
    yates = min(0.5, dev)
    chi2 = (dev - yates) ** 2 / (trials * null_p * (1.0 - null_p))
    return ProportionTestResult(successes, trials, _chi2_1_sf(chi2), method, null_p=null_p, statistic=chi2)


def proportion_test_2(s1: int, n1: int, s2: int, n2: int) -> ProportionTestResult:
    """Pooled two-sample z-test (as a 1-df chi-square) with continuity correction."""
    _validate_counts(s1, n1)
    _validate_counts(s2, n2)
    p1, p2 = s1 / n1, s2 / n2
    pooled = (s1 + s2) / (n1 + n2)
    inv = 1.0 / n1 + 1.0 / n2
    delta = abs(p1 - p2)
    var = pooled * (1.0 - pooled) * inv
    method = "two-sample pooled z-test, continuity corrected"
    if var <= 0.0:
        return ProportionTestResult(int(s1), int(n1), 1.0, method, successes2=int(s2), trials2=int(n2), statistic=0.0)
    yates = min(0.5 * inv, delta)
    chi2 = (delta - yates) ** 2 / var
    return ProportionTestResult(
        int(s1), int(n1), _chi2_1_sf(chi2), method, successes2=int(s2), trials2=int(n2), statistic=chi2
    )


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    _validate_counts(successes, trials)
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else float(special.betaincinv(successes, trials - successes + 1, alpha / 2))
    hi = 1.0 if successes == trials else float(special.betaincinv(successes + 1, trials - successes, 1 - alpha / 2))
    return lo, hi


# -- logistic regression ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogisticFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    converged: bool
    n_obs: int
    iterations: int = 0
    cov_type: str = "nonrobust"
    n_clusters: int | None = None
    names: tuple = field(default=())

    @property
    def k(self) -> int:
        return self.coefficients.shape[0]

    @property
    def deviance(self) -> float:
        return -2.0 * self.log_likelihood

    @property
    def aic(self) -> float:
        return self.deviance + 2.0 * self.k

    @property
    def bic(self) -> float:
        return self.deviance + self.k * math.log(self.n_obs)

    @property
    def z_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.standard_errors

    @property
    def p_values(self) -> np.ndarray:
        return np.array([math.erfc(abs(z) / math.sqrt(2.0)) if np.isfinite(z) else float("nan") for z in self.z_values])

    def to_json(self) -> dict:
        names = self.names or tuple(f"x{i}" for i in range(self.k))
        return {
            "method": f"logistic regression (IRLS), covariance={self.cov_type}",
            "terms": [
                {"name": nm, "coefficient": float(b), "se": float(se), "z": float(z), "p_value": float(p)}
                for nm, b, se, z, p in zip(names, self.coefficients, self.standard_errors, self.z_values, self.p_values)
            ],
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "bic": self.bic,
            "deviance": self.deviance,
            "n_obs": self.n_obs,
            "n_clusters": self.n_clusters,
            "converged": self.converged,
        }


def log_likelihood(design, outcomes, beta) -> float:
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    eta = X @ np.asarray(beta, dtype=np.float64)
    # log(1 + e^eta) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(design, outcomes, beta) -> np.ndarray:
    """Gradient of the log-likelihood."""
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    p = special.expit(X @ np.asarray(beta, dtype=np.float64))
    return X.T @ (y - p)


def _sandwich(X, resid, bread, groups):
    scores = X * resid[:, None]
    if groups is None:
        meat = scores.T @ scores
    else:
        _, inverse = np.unique(groups, return_inverse=True)
        summed = np.zeros((inverse.max() + 1, X.shape[1]))
        np.add.at(summed, inverse, scores)
        meat = summed.T @ summed
    cov = bread @ meat @ bread
    return 0.5 * (cov + cov.T)


def logistic_fit(
    design,
    outcomes,
    clusters=None,
    *,
    names=(),
    cov_type: str | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    separation_bound: float = 1e6,
) -> LogisticFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    ``design`` must already contain an intercept column (and any fixed-effect
    dummies).  With ``clusters`` the covariance is the cluster-summed sandwich
    scaled by ``G/(G-1)``; ``cov_type="hc0"`` gives the plain
    heteroskedasticity-robust sandwich.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise LengthMismatch("design must be a 2-D matrix")
    n, k = X.shape
    if y.shape[0] != n:
        raise LengthMismatch(f"{n} design rows but {y.shape[0]} outcomes")
    if n <= k:
        raise TooFew(f"need more observations ({n}) than columns ({k})")
    if not np.all((y == 0) | (y == 1)):
        raise OutOfRange("outcomes must be 0/1")
    if np.linalg.matrix_rank(X) < k:
        raise Singular("design matrix is rank deficient")
    if clusters is not None:
        clusters = np.asarray(clusters)
        if clusters.shape[0] != n:
            raise LengthMismatch(f"{n} design rows but {clusters.shape[0]} cluster labels")

    beta = np.zeros(k)
    ll = log_likelihood(X, y, beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = special.expit(X @ beta)
        w = p * (1.0 - p)
        info = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(info, X.T @ (y - p))
        except np.linalg.LinAlgError as exc:
            raise Separation("information matrix became singular (fitted probabilities saturated)") from exc
        # halve the Newton step while it lowers the likelihood
        t = 1.0
        new_beta = beta + step
        new_ll = log_likelihood(X, y, new_beta)
        while new_ll < ll - 1e-12 * max(1.0, abs(ll)) and t > 1e-8:
            t *= 0.5
            new_beta = beta + t * step
            new_ll = log_likelihood(X, y, new_beta)
        change = np.max(np.abs(new_beta - beta))
        beta, ll = new_beta, new_ll
        if np.max(np.abs(beta)) > separation_bound:
            raise Separation("coefficients diverge: outcomes are perfectly separated")
        if change <= tol:
            converged = True
            break
    eta = X @ beta
    if not converged:
        if np.any(np.abs(eta) > 30.0):
            raise Separation("IRLS did not converge and fitted probabilities are saturated")
        raise NoConvergence(f"IRLS did not converge in {max_iter} iterations")

    p = special.expit(eta)
    w = p * (1.0 - p)
    info = X.T @ (X * w[:, None])
    bread = np.linalg.inv(info)
    bread = 0.5 * (bread + bread.T)
    n_clusters = None
    if cov_type is None:
        cov_type = "cluster" if clusters is not None else "nonrobust"
    if cov_type == "nonrobust":
        cov = bread
    elif cov_type == "hc0":
        cov = _sandwich(X, y - p, bread, None)
    elif cov_type == "cluster":
        if clusters is None:
            raise ValueError("cov_type='cluster' needs cluster labels")
        n_clusters = int(np.unique(clusters).shape[0])
        cov = _sandwich(X, y - p, bread, clusters)
        if n_clusters > 1:
            cov = cov * (n_clusters / (n_clusters - 1))
    else:
        raise ValueError(f"unknown cov_type {cov_type!r}")
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return LogisticFit(
        coefficients=beta,
        standard_errors=se,
        covariance=cov,
        log_likelihood=ll,
        converged=converged,
        n_obs=n,
        iterations=it,
        cov_type=cov_type,
        n_clusters=n_clusters,
        names=tuple(names),
    )


# -- ranks and correlation --------------------------------------------------

def quartile_bins(values) -> np.ndarray:
    """Rank-based quartile of each value (1..4).

    Ties share their average rank ``r``; the bin is ``floor(4 (r-1) / n) + 1``.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    if n < 4:
        raise TooFew(f"quartiles need at least 4 values, got {n}")
    r = stats.rankdata(x, method="average")
    return (np.floor(4.0 * (r - 1.0) / n).astype(np.int64) + 1).clip(1, 4)


def correlation(x, y) -> float:
    """Pearson product-moment correlation."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 3:
        raise TooFew("correlation needs at least 3 pairs")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        raise ZeroVariance("correlation undefined for a constant vector")
    return max(-1.0, min(1.0, float(da @ db) / (sa * sb)))


def correlation_pvalue(r: float, n: int) -> float:
    """Two-sided p-value of a Pearson r from ``n`` pairs (t with n-2 df)."""
    if n < 3:
        raise TooFew("need at least 3 pairs")
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))
