"""Optimal planning/analysis sample splits for matched-pair studies.

Given a matched-pair dataset with many outcomes, this package finds the
split fraction that maximises the power of a two-stage testing workflow
(select promising outcomes on a planning sample, confirm them on the
held-out analysis sample) while bounding the effect of hidden bias on
the paired signed-rank test.
"""

from .dataset import (
    CsvSchema,
    MatchedPairDataset,
    SplitResult,
    all_pair_differences,
    load_matched_csv,
    pair_differences,
    split_pairs,
    write_matched_csv,
)
from .errors import SplitSenseError
from .multitest import bh_reject, bonferroni_reject, holm_reject
from .senswilcox import (
    PowerParams,
    SensParams,
    SignedRankResult,
    critical_value,
    design_sensitivity,
    estimate_p012,
    gamma_pvalue_exact,
    gamma_pvalue_normal,
    gamma_pvalues_normal,
    power_normal_approx,
    signed_rank_statistic,
)
from .simbench import (
    AssignmentMode,
    BenchmarkScenario,
    DGPConfig,
    MatchDistance,
    RawPopulation,
    covariate_balance,
    generate_population,
    match_pairs,
    run_benchmark,
    scenario_from_json,
)
from .splitopt import (
    Method,
    PlasmodeConfig,
    PlasmodeDataset,
    PowerCurve,
    RejectionReport,
    default_grid,
    empirical_power,
    generate_plasmode,
    mean_truth_recovery,
    optimize_fraction,
    run_split_test,
    truth_recovery,
    two_stage_analyze,
)

__version__ = "0.1.0"

__all__ = [
    "AssignmentMode",
    "BenchmarkScenario",
    "CsvSchema",
    "DGPConfig",
    "MatchDistance",
    "MatchedPairDataset",
    "Method",
    "PlasmodeConfig",
    "PlasmodeDataset",
    "PowerCurve",
    "PowerParams",
    "RawPopulation",
    "RejectionReport",
    "SensParams",
    "SignedRankResult",
    "SplitResult",
    "SplitSenseError",
    "all_pair_differences",
    "bh_reject",
    "bonferroni_reject",
    "covariate_balance",
    "critical_value",
    "default_grid",
    "design_sensitivity",
    "empirical_power",
    "estimate_p012",
    "gamma_pvalue_exact",
    "gamma_pvalue_normal",
    "gamma_pvalues_normal",
    "generate_plasmode",
    "generate_population",
    "holm_reject",
    "load_matched_csv",
    "match_pairs",
    "mean_truth_recovery",
    "optimize_fraction",
    "pair_differences",
    "power_normal_approx",
    "run_benchmark",
    "run_split_test",
    "scenario_from_json",
    "signed_rank_statistic",
    "split_pairs",
    "truth_recovery",
    "two_stage_analyze",
    "write_matched_csv",
]
