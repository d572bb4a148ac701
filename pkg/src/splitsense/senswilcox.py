"""Sign-score test for paired differences under a bounded-bias model.

A bias bound ``gamma >= 1`` caps how far hidden confounding can push the
within-pair probability of a positive difference: the worst case is
``kappa = gamma / (1 + gamma)`` independently across pairs.  This module
computes the signed-rank statistic, its worst-case tail probabilities
(exactly for small samples, via a normal approximation otherwise),
worst-case critical values, and a large-sample power approximation driven
by three estimable concordance probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import (
    BoundaryP1Error,
    EmptyInputError,
    ExactLimitExceededError,
    InvalidAlphaError,
    InvalidGammaError,
    NonFiniteValueError,
    NonPositiveVarianceError,
    TooFewPairsError,
)

__all__ = [
    "DEFAULT_EXACT_LIMIT",
    "PowerParams",
    "SensParams",
    "SignedRankResult",
    "critical_value",
    "design_sensitivity",
    "estimate_p012",
    "gamma_pvalue_exact",
    "gamma_pvalue_normal",
    "gamma_pvalues_normal",
    "signed_rank_statistic",
    "signed_rank_statistics",
]

# floor for reported p-values; avoids exact zeros from extreme z-scores
P_FLOOR = 1e-300

DEFAULT_EXACT_LIMIT = 20


@dataclass(frozen=True)
class SensParams:
    """Bias bound and test level.

    Attributes:
        gamma: odds bound on differential treatment assignment, >= 1.
        alpha: one-sided test level in (0, 1).
    """

    gamma: float
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if not np.isfinite(self.gamma) or self.gamma < 1.0:
            raise InvalidGammaError(f"gamma must be finite and >= 1, got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidAlphaError(f"alpha must lie strictly between 0 and 1, got {self.alpha}")

    @property
    def kappa(self) -> float:
        """Worst-case probability that a pair contributes a positive sign."""
        return self.gamma / (1.0 + self.gamma)


@dataclass(frozen=True)
class SignedRankResult:
    statistic: float
    n_pairs: int
    ranks: np.ndarray
    signs: np.ndarray


def _checked_diffs(diffs) -> np.ndarray:
    arr = np.asarray(diffs, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"differences must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyInputError("empty difference vector")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError("differences contain NaN or infinite entries")
    return arr


def signed_rank_statistic(diffs) -> SignedRankResult:
    """Signed-rank statistic with average ranks and half-credit for zeros.

    Absolute differences are ranked ascending (ties share their average
    rank, zeros included), and each rank enters the sum with weight 1 for
    a positive difference, 0 for a negative one, and 1/2 for a zero.
    """
    arr = _checked_diffs(diffs)
    ranks = rankdata(np.abs(arr))
    signs = np.where(arr > 0, 1.0, np.where(arr < 0, 0.0, 0.5))
    return SignedRankResult(
        statistic=float(np.dot(signs, ranks)),
        n_pairs=arr.size,
        ranks=ranks,
        signs=signs,
    )


def signed_rank_statistics(diff_matrix: np.ndarray) -> np.ndarray:
    """Column-wise signed-rank statistics for an ``(n_pairs, n_outcomes)`` matrix."""
    v = np.asarray(diff_matrix, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise EmptyInputError(f"need a non-empty 2-d difference matrix, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValueError("differences contain NaN or infinite entries")
    ranks = rankdata(np.abs(v), axis=0)
    signs = np.where(v > 0, 1.0, np.where(v < 0, 0.0, 0.5))
    return (signs * ranks).sum(axis=0)


def _moments(n: int, kappa: float) -> tuple[float, float]:
    mean = kappa * n * (n + 1) / 2.0
    var = kappa * (1.0 - kappa) * n * (n + 1) * (2 * n + 1) / 6.0
    return mean, var


def gamma_pvalue_exact(diffs, params: SensParams, exact_limit: int = DEFAULT_EXACT_LIMIT) -> float:
    """Exact worst-case upper tail probability of the signed-rank statistic.

    Under the worst-case bias model each nonzero difference keeps its
    magnitude and is positive independently with probability ``kappa``;
    zero differences contribute a fixed half-rank.  The tail is computed
    by convolving the doubled-rank distribution, which keeps half-integer
    average ranks on an integer lattice.

    Args:
        diffs: 1-d treated-minus-control differences.
        params: bias bound and level.
        exact_limit: refuse inputs with more pairs than this.

    Returns:
        ``P(W >= w_obs)`` clamped to ``[1e-300, 1]``.
    """
    arr = _checked_diffs(diffs)
    n = arr.size
    if n > exact_limit:
        raise ExactLimitExceededError(f"{n} pairs exceeds the exact limit of {exact_limit}")
    res = signed_rank_statistic(arr)
    kappa = params.kappa

    nonzero = arr != 0
    base = float(np.dot(res.ranks[~nonzero], np.full((~nonzero).sum(), 0.5)))
    doubled = np.rint(2.0 * res.ranks[nonzero]).astype(np.int64)
    target = 2.0 * (res.statistic - base)
    t = int(np.rint(target))
    if abs(target - t) > 1e-6:
        raise AssertionError("doubled ranks did not land on the integer lattice")

    total = int(doubled.sum())
    pmf = np.zeros(total + 1, dtype=np.float64)
    pmf[0] = 1.0
    upper = 0
    for r in doubled:
        nxt = pmf[: upper + r + 1] * (1.0 - kappa)
        nxt[r:] += pmf[: upper + 1] * kappa
        pmf[: upper + r + 1] = nxt
        upper += r
    if t <= 0:
        p = 1.0
    elif t > total:
        p = 0.0
    else:
        p = float(pmf[t:].sum())
    return float(min(max(p, P_FLOOR), 1.0))


def gamma_pvalues_normal(diff_matrix: np.ndarray, params: SensParams) -> np.ndarray:
    """Normal-approximation worst-case p-values, one per outcome column."""
    v = np.asarray(diff_matrix, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    w = signed_rank_statistics(v)
    mean, var = _moments(v.shape[0], params.kappa)
    z = (w - mean) / np.sqrt(var)
    return np.clip(norm.sf(z), P_FLOOR, 1.0)


def gamma_pvalue_normal(diffs, params: SensParams) -> float:
    """Normal-approximation worst-case p-value for one difference vector."""
    arr = _checked_diffs(diffs)
    return float(gamma_pvalues_normal(arr, params)[0])


def critical_value(n_pairs: int, params: SensParams) -> float:
    """Rejection cutoff for the worst-case statistic at level ``params.alpha``.

    Returns the worst-case mean plus the upper ``alpha`` normal quantile
    times the worst-case standard deviation.
    """
    if n_pairs < 1:
        raise EmptyInputError(f"need at least one pair, got {n_pairs}")
    mean, var = _moments(n_pairs, params.kappa)
    return float(mean + norm.isf(params.alpha) * np.sqrt(var))


@dataclass(frozen=True)
class PowerParams:
    """Concordance probabilities that drive the power approximation.

    ``p0``: a single difference is positive.  ``p1``: the sum of two
    independent differences is positive.  ``p2``: two sums sharing a
    common difference are both positive.
    """

    p0: float
    p1: float
    p2: float

    def __post_init__(self) -> None:
        for name in ("p0", "p1", "p2"):
            v = getattr(self, name)
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.p2 > self.p1 + 1e-12:
            raise ValueError(f"p2={self.p2} cannot exceed p1={self.p1}")


def estimate_p012(diffs) -> PowerParams:
    """Estimate the concordance probabilities from observed differences.

    ``p0`` is the fraction of positive differences, ``p1`` the fraction of
    unordered pairs with a positive sum, and ``p2`` the fraction of
    ordered triples ``(i, {j, s})`` whose two sums through ``i`` are both
    positive.  Runs in O(n^2).
    """
    arr = _checked_diffs(diffs)
    n = arr.size
    if n < 3:
        raise TooFewPairsError(f"need at least 3 pairs to estimate, got {n}")
    pos_sum = (arr[:, None] + arr[None, :]) > 0
    p0 = float(np.mean(arr > 0))
    iu = np.triu_indices(n, k=1)
    p1 = float(np.mean(pos_sum[iu]))
    r = pos_sum.sum(axis=1) - np.diag(pos_sum)  # partners j != i with positive sum
    p2 = float((r * (r - 1)).sum() / (n * (n - 1) * (n - 2)))
    return PowerParams(p0=p0, p1=p1, p2=p2)


def power_normal_approx(pp: PowerParams, n_pairs: int, params: SensParams) -> float:
    """Approximate probability of rejecting at the worst-case critical value.

    Uses the normal limit of the signed-rank statistic under the
    alternative described by ``pp``.  A zero-variance alternative is a
    point mass, so the power degenerates to 1, 0 or 1/2 depending on
    which side of the cutoff the mean falls.
    """
    if n_pairs < 3:
        raise TooFewPairsError(f"need at least 3 pairs, got {n_pairs}")
    n = float(n_pairs)
    c = critical_value(n_pairs, params)
    mu = 0.5 * n * (n - 1) * pp.p1 + n * pp.p0
    var = (
        n * (n - 1) * (n - 2) * (pp.p2 - pp.p1**2)
        + 0.5 * n * (n - 1) * (2.0 * (pp.p0 - pp.p1) ** 2 + 3.0 * pp.p1 * (1.0 - pp.p1))
        + n * pp.p0 * (1.0 - pp.p0)
    )
    scale = max(n**3, 1.0)
    if var < -1e-9 * scale:
        raise NonPositiveVarianceError(f"variance came out negative: {var}")
    var = max(var, 0.0)
    if var == 0.0:
        return 1.0 if mu > c else (0.0 if mu < c else 0.5)
    return float(np.clip(norm.sf((c - mu) / np.sqrt(var)), 0.0, 1.0))


def design_sensitivity(pp: PowerParams) -> float:
    """Bias level at which large-sample power transitions from 1 to 0.

    Solves ``kappa = p1`` for the bias bound, giving ``p1 / (1 - p1)``.
    """
    if not 0.0 < pp.p1 < 1.0:
        raise BoundaryP1Error(f"p1={pp.p1} has no finite sensitivity value")
    return pp.p1 / (1.0 - pp.p1)
