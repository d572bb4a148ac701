import numpy as np
import pytest

from splitsense import MatchedPairDataset


def make_dataset(
    rng: np.random.Generator,
    n_pairs: int,
    n_outcomes: int,
    n_covariates: int = 0,
    shift: float = 0.0,
) -> MatchedPairDataset:
    """Random dataset with optional constant treated-unit shift on all outcomes."""
    responses = rng.standard_normal((n_pairs, 2, n_outcomes))
    treated_slot = rng.integers(0, 2, size=n_pairs)
    treatment = np.zeros((n_pairs, 2), dtype=np.int8)
    treatment[np.arange(n_pairs), treated_slot] = 1
    responses[np.arange(n_pairs), treated_slot, :] += shift
    covariates = rng.standard_normal((n_pairs, 2, n_covariates)) if n_covariates else None
    return MatchedPairDataset(responses=responses, treatment=treatment, covariates=covariates)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion after the run."""
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(results):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} [{verdict}] {detail}")
