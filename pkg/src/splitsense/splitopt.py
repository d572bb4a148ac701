"""Split-fraction optimisation via plasmode Monte Carlo.

Workflow: bootstrap plasmode copies of a real matched-pair dataset with
known synthetic effects, run the two-stage split procedure (select
outcomes on the planning pairs, confirm them on the analysis pairs) over
a grid of analysis fractions, and pick the fraction that recovers the
largest share of the planted effects.  The chosen fraction is then used
once on the real data.

All randomness is derived from a single seed through named seed streams,
so every function here is a pure function of its arguments and results
do not depend on thread count or evaluation order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Sequence

import numpy as np

from .dataset import (
    MatchedPairDataset,
    all_pair_differences,
    control_responses,
    planning_size,
    split_pairs,
    split_permutation,
)
from .errors import (
    AllDegenerateError,
    DegenerateEtaError,
    DegenerateSplitError,
    EmptyGridError,
    ZeroVarianceError,
)
from .multitest import bh_reject, bonferroni_reject, holm_reject
from .senswilcox import SensParams, gamma_pvalues_normal

__all__ = [
    "Method",
    "PlasmodeConfig",
    "PlasmodeDataset",
    "PowerCurve",
    "RejectionReport",
    "default_grid",
    "empirical_power",
    "generate_plasmode",
    "mean_truth_recovery",
    "optimize_fraction",
    "run_split_test",
    "truth_recovery",
    "two_stage_analyze",
]

# spawn-key tags so plasmode draws and split shuffles never share a stream
_PLASMODE_STREAM = 1
_SPLIT_STREAM = 2

NEAR_OPTIMAL_RATIO = 0.95


class Method(str, Enum):
    """Selection/confirmation rule for the two-stage procedure.

    FWER: Bonferroni selection, then per-outcome level ``alpha / s``.
    FDR: step-up selection, then step-up again within the selected set.
    NAIVE: take the single most significant outcome, confirm at ``alpha``.
    """

    FWER = "fwer"
    FDR = "fdr"
    NAIVE = "naive"


def as_method(value: "Method | str") -> Method:
    if isinstance(value, Method):
        return value
    try:
        return Method(str(value).lower())
    except ValueError:
        raise ValueError(f"unknown method {value!r}; expected one of {[m.value for m in Method]}") from None


@dataclass(frozen=True)
class PlasmodeConfig:
    """Knobs for synthetic-effect bootstrap replication.

    Attributes:
        n_replications: number of plasmode copies to average over.
        eta: fraction of outcomes that receive a synthetic effect.
        effect_lo / effect_hi: effect magnitudes are drawn uniformly from
            ``[effect_lo * sd_k, effect_hi * sd_k]`` where ``sd_k`` is the
            control-response standard deviation of outcome ``k``.
        seed: master seed for all plasmode randomness.
    """

    n_replications: int = 1000
    eta: float = 0.10
    effect_lo: float = 0.2
    effect_hi: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_replications < 1:
            raise ValueError(f"n_replications must be >= 1, got {self.n_replications}")
        if not 0.0 < self.eta < 1.0:
            raise DegenerateEtaError(f"eta must lie strictly between 0 and 1, got {self.eta}")
        if not 0.0 <= self.effect_lo <= self.effect_hi or not math.isfinite(self.effect_hi):
            raise ValueError(f"need 0 <= effect_lo <= effect_hi, got ({self.effect_lo}, {self.effect_hi})")
        if self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")


@dataclass(frozen=True)
class PlasmodeDataset:
    """One synthetic replication: data plus the planted truth."""

    data: MatchedPairDataset
    truth: frozenset[int]
    effects: np.ndarray

    def __post_init__(self) -> None:
        eff = np.array(self.effects, dtype=np.float64, copy=True)
        if eff.shape != (self.data.n_pairs, self.data.n_outcomes):
            raise ValueError(f"effects shape {eff.shape} does not match the dataset")
        off_truth = np.ones(self.data.n_outcomes, dtype=bool)
        off_truth[list(self.truth)] = False
        if np.any(eff[:, off_truth] != 0.0):
            raise ValueError("effects must be zero outside the truth columns")
        eff.flags.writeable = False
        object.__setattr__(self, "effects", eff)
        object.__setattr__(self, "truth", frozenset(int(k) for k in self.truth))


def affected_count(eta: float, n_outcomes: int) -> int:
    """floor(eta * K) with a guard against float noise."""
    return int(math.floor(eta * n_outcomes + 1e-9))


def _split_seed(seed: int, replication: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(_SPLIT_STREAM, replication))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_plasmode(d: MatchedPairDataset, cfg: PlasmodeConfig, replication: int) -> PlasmodeDataset:
    """Build one synthetic dataset with known affected outcomes.

    Each synthetic pair takes two control-response vectors drawn with
    replacement from the observed control units, gets a fresh 50/50
    treatment label, and the treated unit receives an additive effect on
    the ``floor(eta * K)`` randomly chosen affected outcomes.  Outcomes
    with zero variance never carry an effect.

    Deterministic given ``(cfg.seed, replication)``.
    """
    if replication < 0:
        raise ValueError(f"replication index must be >= 0, got {replication}")
    n, k = d.n_pairs, d.n_outcomes
    if n < 2:
        raise ValueError("plasmode generation needs at least two pairs")
    n_affected = affected_count(cfg.eta, k)
    if n_affected < 1:
        raise DegenerateEtaError(f"eta={cfg.eta} with {k} outcomes plants no effects")

    ctrl = control_responses(d)
    sd = ctrl.std(axis=0, ddof=1)
    eligible = np.flatnonzero(sd > 0)
    if eligible.size < n_affected:
        raise ZeroVarianceError(
            f"only {eligible.size} outcomes have positive variance, need {n_affected}"
        )

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_PLASMODE_STREAM, replication)))
    truth = np.sort(rng.choice(eligible, size=n_affected, replace=False))
    base_idx = rng.integers(0, n, size=(n, 2))
    treated_slot = rng.integers(0, 2, size=n)

    effects = np.zeros((n, k), dtype=np.float64)
    for col in truth:
        effects[:, col] = rng.uniform(cfg.effect_lo * sd[col], cfg.effect_hi * sd[col], size=n)

    responses = ctrl[base_idx]  # (n, 2, k)
    responses[np.arange(n), treated_slot, :] += effects
    treatment = np.zeros((n, 2), dtype=np.int8)
    treatment[np.arange(n), treated_slot] = 1

    return PlasmodeDataset(
        data=MatchedPairDataset(responses=responses, treatment=treatment),
        truth=frozenset(int(c) for c in truth),
        effects=effects,
    )


# --- two-stage decisions ----------------------------------------------------

def _select(p_plan: np.ndarray, alpha: float, method: Method) -> np.ndarray:
    if method is Method.FWER:
        return bonferroni_reject(p_plan, alpha)
    if method is Method.FDR:
        return bh_reject(p_plan, alpha)[0]
    return np.array([int(np.argmin(p_plan))], dtype=np.intp)


def _confirm(p_anal: np.ndarray, alpha: float, method: Method, fdr_stage2: str) -> np.ndarray:
    """Indices into the selected set that survive the analysis stage."""
    s = p_anal.size
    if method is Method.FWER:
        return np.flatnonzero(p_anal <= alpha / s)
    if method is Method.FDR:
        if fdr_stage2 == "holm":
            return holm_reject(p_anal, alpha)
        return bh_reject(p_anal, alpha)[0]
    return np.flatnonzero(p_anal <= alpha)


def _two_stage(
    v_plan: np.ndarray,
    v_anal: np.ndarray,
    params: SensParams,
    method: Method,
    fdr_stage2: str = "bh",
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run both stages on pre-split difference matrices.

    Returns ``(selected, rejected, p_plan, p_anal_full)`` where the
    p-value vectors cover all outcomes and unselected outcomes carry NaN
    in the analysis vector.
    """
    p_plan = gamma_pvalues_normal(v_plan, params)
    selected = _select(p_plan, params.alpha, method)
    p_anal_full = np.full(p_plan.size, np.nan)
    if selected.size == 0:
        return selected, selected, p_plan, p_anal_full
    p_anal = gamma_pvalues_normal(v_anal[:, selected], params)
    p_anal_full[selected] = p_anal
    rejected = selected[_confirm(p_anal, params.alpha, method, fdr_stage2)]
    return selected, rejected, p_plan, p_anal_full


@dataclass(frozen=True)
class RejectionReport:
    """Audit trail of one two-stage run."""

    selected: tuple[int, ...]
    rejected: tuple[int, ...]
    planning_pvalues: np.ndarray
    analysis_pvalues: np.ndarray
    zeta: float
    gamma: float
    alpha: float
    method: str
    seed: int

    def __post_init__(self) -> None:
        sel = tuple(int(i) for i in self.selected)
        rej = tuple(int(i) for i in self.rejected)
        k = len(self.planning_pvalues)
        if not set(rej) <= set(sel) <= set(range(k)):
            raise ValueError("need rejected subseteq selected subseteq outcomes")
        pp = np.array(self.planning_pvalues, dtype=np.float64, copy=True)
        pa = np.array(self.analysis_pvalues, dtype=np.float64, copy=True)
        pp.flags.writeable = False
        pa.flags.writeable = False
        object.__setattr__(self, "selected", sel)
        object.__setattr__(self, "rejected", rej)
        object.__setattr__(self, "planning_pvalues", pp)
        object.__setattr__(self, "analysis_pvalues", pa)
        object.__setattr__(self, "method", as_method(self.method).value)

    def to_json(self) -> str:
        payload = {
            "selected": list(self.selected),
            "rejected": list(self.rejected),
            "planning_pvalues": [float(p) for p in self.planning_pvalues],
            "analysis_pvalues": [None if np.isnan(p) else float(p) for p in self.analysis_pvalues],
            "zeta": self.zeta,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "method": self.method,
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_csv(self, fh: IO[str]) -> None:
        """One row per outcome: p-values and selection/rejection flags."""
        writer = csv.writer(fh)
        writer.writerow(["outcome", "planning_pvalue", "analysis_pvalue", "selected", "rejected"])
        sel, rej = set(self.selected), set(self.rejected)
        for k, (pp, pa) in enumerate(zip(self.planning_pvalues, self.analysis_pvalues)):
            writer.writerow([k, repr(float(pp)), "" if np.isnan(pa) else repr(float(pa)),
                             int(k in sel), int(k in rej)])


def run_split_test(
    d: MatchedPairDataset,
    zeta: float,
    params: SensParams,
    method: "Method | str",
    seed: int,
    fdr_stage2: str = "bh",
) -> RejectionReport:
    """Split, select on the planning pairs, confirm on the analysis pairs.

    An empty selection is a valid outcome and yields an empty rejection
    set.  Deterministic given ``seed``.
    """
    method = as_method(method)
    split = split_pairs(d, zeta, seed)
    selected, rejected, p_plan, p_anal = _two_stage(
        all_pair_differences(split.planning),
        all_pair_differences(split.analysis),
        params,
        method,
        fdr_stage2,
    )
    return RejectionReport(
        selected=tuple(selected.tolist()),
        rejected=tuple(rejected.tolist()),
        planning_pvalues=p_plan,
        analysis_pvalues=p_anal,
        zeta=float(zeta),
        gamma=params.gamma,
        alpha=params.alpha,
        method=method.value,
        seed=int(seed),
    )


def two_stage_analyze(
    d: MatchedPairDataset,
    curve: "PowerCurve",
    params: SensParams,
    zeta_override: float | None = None,
    seed: int = 0,
    fdr_stage2: str = "bh",
) -> RejectionReport:
    """Apply the optimised (or overridden) fraction once to real data."""
    zeta = curve.zeta_star if zeta_override is None else float(zeta_override)
    return run_split_test(d, zeta, params, curve.method, seed, fdr_stage2)


# --- power over a grid of fractions ----------------------------------------

def truth_recovery(rejected: Iterable[int], truth: Iterable[int]) -> float:
    """Share of truly affected outcomes among the rejections."""
    truth_set = set(truth)
    if not truth_set:
        raise ValueError("truth set is empty; recovery is undefined")
    return len(set(rejected) & truth_set) / len(truth_set)


def mean_truth_recovery(overlap_counts: Sequence[int], truth_size: int) -> float:
    """Average recovered share across replications with a common truth size."""
    if truth_size < 1:
        raise ValueError("truth_size must be >= 1")
    counts = np.asarray(overlap_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("need at least one replication count")
    if counts.min() < 0 or counts.max() > truth_size:
        raise ValueError("overlap counts must lie in [0, truth_size]")
    return float(np.mean(counts / truth_size))


def recovery_over_grid(
    v: np.ndarray,
    truth: np.ndarray,
    perm: np.ndarray,
    n_plans: Sequence[int],
    params: SensParams,
    method: Method,
    fdr_stage2: str = "bh",
) -> np.ndarray:
    """Recovered truth share at each planning size, for one replication.

    ``perm`` fixes a single shuffle of the pairs, so the splits are nested
    across the grid: common random numbers for every candidate fraction.
    """
    truth = np.asarray(sorted(truth), dtype=np.intp)
    out = np.empty(len(n_plans), dtype=np.float64)
    for g, n_plan in enumerate(n_plans):
        _, rejected, _, _ = _two_stage(v[perm[:n_plan]], v[perm[n_plan:]], params, method, fdr_stage2)
        out[g] = np.isin(rejected, truth).sum() / truth.size
    return out


@dataclass(frozen=True)
class PowerCurve:
    """Estimated recovery power over a grid of analysis fractions."""

    grid: np.ndarray
    power: np.ndarray
    zeta_star: float
    near_optimal: np.ndarray
    method: str
    gamma: float
    m_used: int

    def __post_init__(self) -> None:
        g = np.array(self.grid, dtype=np.float64, copy=True)
        p = np.array(self.power, dtype=np.float64, copy=True)
        if g.ndim != 1 or g.size == 0 or g.shape != p.shape:
            raise ValueError("grid and power must be matching non-empty 1-d arrays")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("power values must lie in [0, 1]")
        no = np.array(self.near_optimal, dtype=np.float64, copy=True)
        g.flags.writeable = False
        p.flags.writeable = False
        no.flags.writeable = False
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "power", p)
        object.__setattr__(self, "near_optimal", no)
        object.__setattr__(self, "method", as_method(self.method).value)

    @classmethod
    def from_power_values(
        cls,
        grid: np.ndarray,
        power: np.ndarray,
        method: "Method | str",
        gamma: float,
        m_used: int,
    ) -> "PowerCurve":
        """Attach the argmax and the 95%-of-peak set to raw curve values.

        The optimum is the smallest grid fraction attaining the maximum;
        the near-optimal set collects every fraction whose power is at
        least ``NEAR_OPTIMAL_RATIO`` times the peak.
        """
        grid = np.asarray(grid, dtype=np.float64)
        power = np.asarray(power, dtype=np.float64)
        peak = power.max()
        zeta_star = float(grid[int(np.argmax(power))])  # argmax takes the first max
        near = grid[power >= NEAR_OPTIMAL_RATIO * peak]
        return cls(
            grid=grid,
            power=power,
            zeta_star=zeta_star,
            near_optimal=near,
            method=as_method(method).value,
            gamma=float(gamma),
            m_used=int(m_used),
        )

    def to_json(self) -> str:
        payload = {
            "grid": [float(z) for z in self.grid],
            "power": [float(p) for p in self.power],
            "zeta_star": self.zeta_star,
            "near_optimal": [float(z) for z in self.near_optimal],
            "method": self.method,
            "gamma": self.gamma,
            "m_used": self.m_used,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh)
        writer.writerow(["zeta", "power"])
        for z, p in zip(self.grid, self.power):
            writer.writerow([repr(float(z)), repr(float(p))])


def default_grid(n_pairs: int, step: float = 0.01) -> np.ndarray:
    """Fractions ``step, 2*step, ..., < 1`` that give non-empty splits."""
    if not 0.0 < step < 1.0:
        raise ValueError(f"step must lie strictly between 0 and 1, got {step}")
    count = int(math.ceil(1.0 / step)) - 1
    grid = np.round(np.arange(1, count + 1) * step, 10)
    grid = grid[(grid > 0.0) & (grid < 1.0)]
    return np.array([z for z in grid if _valid_zeta(z, n_pairs)])


def _valid_zeta(zeta: float, n_pairs: int) -> bool:
    if not 0.0 < zeta < 1.0:
        return False
    n_plan = planning_size(n_pairs, zeta)
    return 1 <= n_plan <= n_pairs - 1


def _prepare_grid(grid, n_pairs: int) -> np.ndarray:
    g = np.unique(np.asarray(grid, dtype=np.float64))
    if g.size == 0:
        raise EmptyGridError("candidate grid is empty")
    kept = np.array([z for z in g if _valid_zeta(z, n_pairs)])
    if kept.size == 0:
        raise AllDegenerateError(f"no grid fraction yields a valid split of {n_pairs} pairs")
    return kept


def _replication_recovery(
    d: MatchedPairDataset,
    cfg: PlasmodeConfig,
    replication: int,
    n_plans: Sequence[int],
    params: SensParams,
    method: Method,
    fdr_stage2: str,
) -> np.ndarray:
    plas = generate_plasmode(d, cfg, replication)
    v = all_pair_differences(plas.data)
    perm = split_permutation(_split_seed(cfg.seed, replication), d.n_pairs)
    truth = np.asarray(sorted(plas.truth), dtype=np.intp)
    return recovery_over_grid(v, truth, perm, n_plans, params, method, fdr_stage2)


def empirical_power(
    d: MatchedPairDataset,
    cfg: PlasmodeConfig,
    zeta: float,
    params: SensParams,
    method: "Method | str",
    fdr_stage2: str = "bh",
) -> float:
    """Average recovered truth share at one analysis fraction.

    Equals the corresponding grid point of :func:`optimize_fraction` run
    with the same config, because both derive plasmodes and shuffles from
    the same seed streams.
    """
    method = as_method(method)
    if not _valid_zeta(zeta, d.n_pairs):
        raise DegenerateSplitError(f"zeta={zeta} does not split {d.n_pairs} pairs")
    n_plans = [planning_size(d.n_pairs, zeta)]
    total = 0.0
    for m in range(cfg.n_replications):
        total += _replication_recovery(d, cfg, m, n_plans, params, method, fdr_stage2)[0]
    return total / cfg.n_replications


def optimize_fraction(
    d: MatchedPairDataset,
    cfg: PlasmodeConfig,
    grid=None,
    params: SensParams | None = None,
    method: "Method | str" = Method.FWER,
    fdr_stage2: str = "bh",
    n_threads: int = 1,
) -> PowerCurve:
    """Estimate the power curve over candidate fractions and pick the best.

    Args:
        d: real matched-pair dataset the plasmodes are built from.
        cfg: plasmode configuration (replications, effect sizes, seed).
        grid: candidate analysis fractions; defaults to 0.01..0.99 in
            steps of 0.01, pruned of fractions that cannot split ``d``.
        params: bias bound and level for both stages.
        method: selection/confirmation rule.
        n_threads: worker threads; results are assembled by replication
            index, so the output is identical for any thread count.

    Returns:
        A :class:`PowerCurve` with the smallest maximising fraction and
        the near-optimal set.
    """
    method = as_method(method)
    if params is None:
        params = SensParams(gamma=1.0)
    g = default_grid(d.n_pairs) if grid is None else _prepare_grid(grid, d.n_pairs)
    n_plans = [planning_size(d.n_pairs, z) for z in g]
    m_total = cfg.n_replications

    rows = np.empty((m_total, g.size), dtype=np.float64)
    if n_threads <= 1:
        for m in range(m_total):
            rows[m] = _replication_recovery(d, cfg, m, n_plans, params, method, fdr_stage2)
    else:
        def work(m: int) -> None:
            rows[m] = _replication_recovery(d, cfg, m, n_plans, params, method, fdr_stage2)

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(m_total)))

    power = rows.mean(axis=0)
    return PowerCurve.from_power_values(g, power, method, params.gamma, m_total)
