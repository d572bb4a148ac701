"""Matched-pair datasets: container, CSV round-trip, and pair splitting.

The central type is :class:`MatchedPairDataset`, an immutable array bundle
holding per-pair responses for every outcome, treatment indicators, and
optional covariates.  The on-disk format is a long CSV with two rows per
pair (see :func:`load_matched_csv`).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    DegenerateSplitError,
    EmptyFileError,
    MissingUnitError,
    NonNumericOutcomeError,
    TreatmentViolationError,
)

__all__ = [
    "CsvSchema",
    "MatchedPairDataset",
    "SplitResult",
    "all_pair_differences",
    "control_responses",
    "load_matched_csv",
    "pair_differences",
    "split_pairs",
    "split_permutation",
    "write_matched_csv",
]


@dataclass(frozen=True)
class CsvSchema:
    """Column naming convention for the long matched-pair CSV format."""

    pair_col: str = "pair_id"
    unit_col: str = "unit"
    treat_col: str = "z"
    covariate_prefix: str = "x_"
    outcome_prefix: str = "y_"


DEFAULT_SCHEMA = CsvSchema()


@dataclass(frozen=True)
class MatchedPairDataset:
    """Responses, treatment indicators and covariates for matched pairs.

    Args:
        responses: float array of shape ``(n_pairs, 2, n_outcomes)``.
        treatment: 0/1 array of shape ``(n_pairs, 2)``; each row sums to 1.
        covariates: optional float array ``(n_pairs, 2, n_covariates)``.
        pair_ids: optional tuple of opaque pair labels, one per pair.

    All arrays are copied and frozen at construction time.
    """

    responses: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray | None = None
    pair_ids: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        resp = np.array(self.responses, dtype=np.float64, copy=True)
        if resp.ndim != 3 or resp.shape[1] != 2 or resp.shape[0] < 1 or resp.shape[2] < 1:
            raise ValueError(f"responses must have shape (n_pairs, 2, n_outcomes), got {resp.shape}")
        if not np.all(np.isfinite(resp)):
            raise NonNumericOutcomeError("responses contain NaN or infinite entries")

        treat = np.array(self.treatment, dtype=np.int8, copy=True)
        if treat.shape != (resp.shape[0], 2):
            raise ValueError(f"treatment must have shape ({resp.shape[0]}, 2), got {treat.shape}")
        if not np.all((treat == 0) | (treat == 1)) or not np.all(treat.sum(axis=1) == 1):
            raise TreatmentViolationError("each pair needs exactly one treated and one control unit")

        cov = self.covariates
        if cov is not None:
            cov = np.array(cov, dtype=np.float64, copy=True)
            if cov.ndim != 3 or cov.shape[:2] != (resp.shape[0], 2):
                raise ValueError(f"covariates must have shape ({resp.shape[0]}, 2, n_covariates), got {cov.shape}")
            if not np.all(np.isfinite(cov)):
                raise ValueError("covariates contain NaN or infinite entries")
            cov.flags.writeable = False

        ids = tuple(str(p) for p in self.pair_ids) if self.pair_ids else tuple(
            str(i) for i in range(resp.shape[0])
        )
        if len(ids) != resp.shape[0]:
            raise ValueError(f"expected {resp.shape[0]} pair ids, got {len(ids)}")

        resp.flags.writeable = False
        treat.flags.writeable = False
        object.__setattr__(self, "responses", resp)
        object.__setattr__(self, "treatment", treat)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "pair_ids", ids)

    @property
    def n_pairs(self) -> int:
        return self.responses.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.responses.shape[2]

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[2]

    def subset(self, indices: np.ndarray) -> "MatchedPairDataset":
        """New dataset restricted to the given pair indices (order kept)."""
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("indices must be a non-empty 1-d array")
        if idx.min() < 0 or idx.max() >= self.n_pairs:
            raise IndexError(f"pair index out of range 0..{self.n_pairs - 1}")
        return MatchedPairDataset(
            responses=self.responses[idx],
            treatment=self.treatment[idx],
            covariates=None if self.covariates is None else self.covariates[idx],
            pair_ids=tuple(self.pair_ids[i] for i in idx),
        )


@dataclass(frozen=True)
class SplitResult:
    """Disjoint planning/analysis partition produced by :func:`split_pairs`."""

    planning: MatchedPairDataset
    analysis: MatchedPairDataset
    zeta: float
    seed: int


def pair_differences(d: MatchedPairDataset, k: int) -> np.ndarray:
    """Treated-minus-control response differences for outcome ``k`` (0-based)."""
    if not 0 <= k < d.n_outcomes:
        raise IndexError(f"outcome index {k} out of range 0..{d.n_outcomes - 1}")
    return all_pair_differences(d)[:, k]


def all_pair_differences(d: MatchedPairDataset) -> np.ndarray:
    """Treated-minus-control differences for all outcomes, shape ``(n_pairs, n_outcomes)``."""
    sign = (d.treatment[:, 0] - d.treatment[:, 1]).astype(np.float64)
    return (d.responses[:, 0, :] - d.responses[:, 1, :]) * sign[:, None]


def control_responses(d: MatchedPairDataset) -> np.ndarray:
    """Control-unit response vectors, shape ``(n_pairs, n_outcomes)``."""
    # when unit 0 is treated the control sits at slot 1, and vice versa
    ctrl_slot = d.treatment[:, 0].astype(np.intp)
    return d.responses[np.arange(d.n_pairs), ctrl_slot, :]


def planning_size(n_pairs: int, zeta: float) -> int:
    """Number of planning pairs for analysis fraction ``zeta``.

    ``floor((1 - zeta) * n)`` with a small guard against float noise in
    products like ``0.3 * 10``.
    """
    return int(math.floor((1.0 - zeta) * n_pairs + 1e-9))


def split_permutation(seed: int, n: int) -> np.ndarray:
    """The seeded pair shuffle that underlies every split at this seed."""
    return np.random.default_rng(seed).permutation(n)


def split_pairs(d: MatchedPairDataset, zeta: float, seed: int) -> SplitResult:
    """Randomly split pairs into planning and analysis parts.

    The first ``floor((1 - zeta) * n_pairs)`` positions of a seeded shuffle
    form the planning sample; the rest form the analysis sample.  Equal
    seeds give identical partitions.

    Args:
        d: dataset to split.
        zeta: analysis fraction, strictly between 0 and 1.
        seed: unsigned integer seed for the shuffle.

    Raises:
        DegenerateSplitError: if either part would be empty.
    """
    if not 0.0 < zeta < 1.0:
        raise DegenerateSplitError(f"zeta must lie strictly between 0 and 1, got {zeta}")
    n = d.n_pairs
    n_plan = planning_size(n, zeta)
    if n_plan < 1 or n - n_plan < 1:
        raise DegenerateSplitError(
            f"zeta={zeta} with {n} pairs leaves planning={n_plan}, analysis={n - n_plan}"
        )
    perm = split_permutation(seed, n)
    plan_idx = np.sort(perm[:n_plan])
    anal_idx = np.sort(perm[n_plan:])
    return SplitResult(
        planning=d.subset(plan_idx),
        analysis=d.subset(anal_idx),
        zeta=float(zeta),
        seed=int(seed),
    )


def load_matched_csv(path: str | os.PathLike, schema: CsvSchema = DEFAULT_SCHEMA) -> MatchedPairDataset:
    """Read a matched-pair dataset from a long CSV file.

    Expected layout: a header row, then two rows per pair.  Required
    columns are the pair id, unit label, treatment indicator and at least
    one outcome column (``y_1, y_2, ...`` by default).  Covariate columns
    (``x_1, ...``) are optional.  Within each pair the treated unit is
    normalised to slot 0.

    Raises:
        EmptyFileError: no data rows.
        MissingUnitError: a pair id without exactly two rows.
        TreatmentViolationError: treatment indicators that do not sum to 1.
        NonNumericOutcomeError: missing or non-numeric outcome values.
    """
    try:
        # the round_trip parser restores written floats bit for bit
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise EmptyFileError(f"{path}: no content") from exc
    if len(df) == 0:
        raise EmptyFileError(f"{path}: header only, no data rows")

    for col in (schema.pair_col, schema.treat_col):
        if col not in df.columns:
            raise ValueError(f"{path}: missing required column {col!r}")

    outcome_cols = [c for c in df.columns if c.startswith(schema.outcome_prefix)]
    cov_cols = [c for c in df.columns if c.startswith(schema.covariate_prefix)]
    if not outcome_cols:
        raise ValueError(f"{path}: no outcome columns with prefix {schema.outcome_prefix!r}")

    for col in outcome_cols:
        vals = pd.to_numeric(df[col], errors="coerce")
        if vals.isna().any():
            bad = int(vals.isna().idxmax())
            raise NonNumericOutcomeError(f"{path}: column {col!r} row {bad}: non-numeric or missing value")
        df[col] = vals.astype(np.float64)
    for col in cov_cols:
        vals = pd.to_numeric(df[col], errors="coerce")
        if vals.isna().any():
            raise NonNumericOutcomeError(f"{path}: covariate column {col!r} has non-numeric values")
        df[col] = vals.astype(np.float64)

    z = pd.to_numeric(df[schema.treat_col], errors="coerce")
    if z.isna().any() or not z.isin((0, 1)).all():
        raise TreatmentViolationError(f"{path}: treatment column must contain only 0 and 1")
    df[schema.treat_col] = z.astype(np.int8)

    resp_rows: list[np.ndarray] = []
    treat_rows: list[tuple[int, int]] = []
    cov_rows: list[np.ndarray] = []
    ids: list[str] = []
    for pid, group in df.groupby(schema.pair_col, sort=False):
        if len(group) != 2:
            raise MissingUnitError(f"{path}: pair {pid!r} has {len(group)} rows, expected 2")
        zvals = group[schema.treat_col].to_numpy()
        if zvals.sum() != 1:
            raise TreatmentViolationError(f"{path}: pair {pid!r} treatment indicators sum to {zvals.sum()}")
        order = np.argsort(-zvals, kind="stable")  # treated unit first
        resp_rows.append(group[outcome_cols].to_numpy(dtype=np.float64)[order])
        treat_rows.append((1, 0))
        if cov_cols:
            cov_rows.append(group[cov_cols].to_numpy(dtype=np.float64)[order])
        ids.append(str(pid))

    return MatchedPairDataset(
        responses=np.stack(resp_rows),
        treatment=np.array(treat_rows, dtype=np.int8),
        covariates=np.stack(cov_rows) if cov_cols else None,
        pair_ids=tuple(ids),
    )


def write_matched_csv(d: MatchedPairDataset, path: str | os.PathLike, schema: CsvSchema = DEFAULT_SCHEMA) -> None:
    """Write a dataset in the long CSV layout accepted by :func:`load_matched_csv`.

    Floats are written with ``repr`` so a write/load cycle reproduces the
    numbers bit for bit.
    """
    header = [schema.pair_col, schema.unit_col, schema.treat_col]
    header += [f"{schema.covariate_prefix}{j + 1}" for j in range(d.n_covariates)]
    header += [f"{schema.outcome_prefix}{k + 1}" for k in range(d.n_outcomes)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(d.n_pairs):
            for j in range(2):
                row: list[str] = [d.pair_ids[i], str(j + 1), str(int(d.treatment[i, j]))]
                if d.covariates is not None:
                    row += [repr(float(v)) for v in d.covariates[i, j]]
                row += [repr(float(v)) for v in d.responses[i, j]]
                writer.writerow(row)
