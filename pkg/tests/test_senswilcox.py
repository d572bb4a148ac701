import itertools

import numpy as np
import pytest
from scipy.stats import rankdata

from splitsense import (
    PowerParams,
    SensParams,
    critical_value,
    design_sensitivity,
    estimate_p012,
    gamma_pvalue_exact,
    gamma_pvalue_normal,
    gamma_pvalues_normal,
    power_normal_approx,
    signed_rank_statistic,
)
from splitsense.errors import (
    BoundaryP1Error,
    EmptyInputError,
    ExactLimitExceededError,
    InvalidAlphaError,
    InvalidGammaError,
    NonFiniteValueError,
    NonPositiveVarianceError,
    TooFewPairsError,
)


def enumeration_pvalue(diffs, kappa):
    """Literal oracle: sum worst-case probabilities over all sign patterns.

    Each nonzero difference keeps its magnitude and is positive with
    probability kappa, independently; zeros always contribute half their
    rank.  Counts the patterns whose statistic reaches the observed one.
    """
    diffs = np.asarray(diffs, dtype=float)
    ranks = rankdata(np.abs(diffs))
    w_obs = float(np.sum(np.where(diffs > 0, 1.0, np.where(diffs < 0, 0.0, 0.5)) * ranks))
    nz = np.flatnonzero(diffs != 0)
    base = 0.5 * ranks[diffs == 0].sum()
    total = 0.0
    for signs in itertools.product((0, 1), repeat=len(nz)):
        s = np.array(signs)
        w = base + float(np.dot(s, ranks[nz]))
        if w >= w_obs - 1e-9:
            total += kappa ** s.sum() * (1 - kappa) ** (len(nz) - s.sum())
    return total


class TestStatistic:
    def test_all_positive(self):
        assert signed_rank_statistic([1.0, 2.0, 3.0, 4.0]).statistic == 10.0

    def test_mixed_signs(self):
        assert signed_rank_statistic([2.0, -1.0, 3.0]).statistic == 5.0

    def test_zero_gets_half_rank(self):
        assert signed_rank_statistic([0.0, 2.0]).statistic == 2.5

    def test_ties_average_ranks(self):
        # |1|,|1| share rank 1.5; |2| gets rank 3
        assert signed_rank_statistic([1.0, -1.0, 2.0]).statistic == 4.5

    def test_reflection_identity(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 30))
            d = np.round(rng.standard_normal(n), int(rng.integers(0, 3)))
            total = signed_rank_statistic(d).statistic + signed_rank_statistic(-d).statistic
            assert total == pytest.approx(n * (n + 1) / 2)

    def test_validation(self):
        with pytest.raises(EmptyInputError):
            signed_rank_statistic([])
        with pytest.raises(NonFiniteValueError):
            signed_rank_statistic([1.0, np.nan])


class TestSensParams:
    def test_kappa(self):
        assert SensParams(1.0).kappa == 0.5
        assert SensParams(2.0).kappa == pytest.approx(2 / 3)

    def test_invalid(self):
        with pytest.raises(InvalidGammaError):
            SensParams(0.9)
        with pytest.raises(InvalidAlphaError):
            SensParams(1.0, alpha=0.0)
        with pytest.raises(InvalidAlphaError):
            SensParams(1.0, alpha=1.0)


class TestExactPvalue:
    def test_all_positive_three(self):
        assert gamma_pvalue_exact([1.0, 2.0, 3.0], SensParams(1.0)) == pytest.approx(1 / 8, abs=1e-15)
        assert gamma_pvalue_exact([1.0, 2.0, 3.0], SensParams(2.0)) == pytest.approx(8 / 27, abs=1e-15)

    def test_statistic_zero_gives_one(self):
        assert gamma_pvalue_exact([-1.0, -2.0], SensParams(1.5)) == 1.0

    def test_all_zero_diffs(self):
        assert gamma_pvalue_exact([0.0, 0.0, 0.0], SensParams(1.0)) == 1.0

    def test_matches_enumeration_oracle(self, rng):
        for trial in range(40):
            n = int(rng.integers(1, 11))
            d = rng.standard_normal(n)
            if trial % 3 == 0:  # force ties and zeros
                d = np.round(d, 0)
            gamma = float(rng.choice([1.0, 1.7, 3.0]))
            got = gamma_pvalue_exact(d, SensParams(gamma))
            want = enumeration_pvalue(d, gamma / (1 + gamma))
            assert got == pytest.approx(want, abs=1e-12)

    def test_gamma_one_is_randomization_count(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 12))
            d = rng.standard_normal(n)
            p = gamma_pvalue_exact(d, SensParams(1.0))
            assert p * 2**n == pytest.approx(round(p * 2**n), abs=1e-9)

    def test_monotone_in_gamma(self, rng):
        d = rng.standard_normal(12)
        ps = [gamma_pvalue_exact(d, SensParams(g)) for g in (1.0, 1.2, 1.5, 2.0, 4.0)]
        assert all(a <= b + 1e-15 for a, b in zip(ps, ps[1:]))

    def test_exact_limit(self, rng):
        with pytest.raises(ExactLimitExceededError):
            gamma_pvalue_exact(rng.standard_normal(21), SensParams(1.0))
        gamma_pvalue_exact(rng.standard_normal(25), SensParams(1.0), exact_limit=25)


class TestNormalPvalue:
    def test_close_to_exact_at_twenty_pairs(self, rng):
        worst = 0.0
        for _ in range(100):
            d = rng.standard_normal(20)
            for gamma in (1.0, 1.5):
                diff = abs(
                    gamma_pvalue_normal(d, SensParams(gamma))
                    - gamma_pvalue_exact(d, SensParams(gamma))
                )
                worst = max(worst, diff)
        assert worst <= 0.03

    def test_monotone_in_gamma(self, rng):
        d = rng.standard_normal(40) + 0.3
        assert gamma_pvalue_normal(d, SensParams(1.5)) >= gamma_pvalue_normal(d, SensParams(1.0))

    def test_clamped_to_unit_interval(self):
        lo = gamma_pvalue_normal(np.arange(1.0, 201.0), SensParams(1.0))
        hi = gamma_pvalue_normal(-np.arange(1.0, 201.0), SensParams(1.0))
        assert 1e-300 <= lo < 1e-6
        assert hi <= 1.0

    def test_matrix_matches_columnwise(self, rng):
        v = rng.standard_normal((30, 6))
        params = SensParams(1.3)
        many = gamma_pvalues_normal(v, params)
        each = [gamma_pvalue_normal(v[:, k], params) for k in range(6)]
        assert np.allclose(many, each, atol=0)


class TestCriticalValue:
    def test_alpha_half_is_worst_case_mean(self):
        assert critical_value(4, SensParams(1.0, alpha=0.5)) == pytest.approx(5.0)
        assert critical_value(10, SensParams(3.0, alpha=0.5)) == pytest.approx(0.75 * 55)

    def test_monotone_in_gamma_and_alpha(self):
        assert critical_value(50, SensParams(2.0)) > critical_value(50, SensParams(1.0))
        assert critical_value(50, SensParams(1.5, alpha=0.01)) > critical_value(50, SensParams(1.5, alpha=0.10))

    def test_against_monte_carlo_quantile(self, rng):
        # draw worst-case statistics directly: ranks are 1..n, signs Bernoulli(kappa)
        n, gamma, alpha = 60, 2.0, 0.05
        kappa = gamma / (1 + gamma)
        ranks = np.arange(1.0, n + 1)
        draws = (rng.random((20000, n)) < kappa) @ ranks
        mc = np.quantile(draws, 1 - alpha)
        assert critical_value(n, SensParams(gamma, alpha)) == pytest.approx(mc, rel=0.015)


class TestPowerParams:
    def test_hand_example(self):
        pp = estimate_p012([1.0, -2.0, 3.0])
        assert (pp.p0, pp.p1, pp.p2) == (pytest.approx(2 / 3), pytest.approx(2 / 3), pytest.approx(1 / 3))

    def test_too_few(self):
        with pytest.raises(TooFewPairsError):
            estimate_p012([1.0, 2.0])

    def test_matches_triple_loop_oracle(self, rng):
        d = rng.standard_normal(15) + 0.2
        pp = estimate_p012(d)
        n = d.size
        p0 = np.mean(d > 0)
        p1 = np.mean([d[i] + d[j] > 0 for i in range(n) for j in range(i + 1, n)])
        hits = total = 0
        for i in range(n):
            others = [j for j in range(n) if j != i]
            for a in range(len(others)):
                for b in range(a + 1, len(others)):
                    total += 1
                    if d[i] + d[others[a]] > 0 and d[i] + d[others[b]] > 0:
                        hits += 1
        assert pp.p0 == pytest.approx(p0)
        assert pp.p1 == pytest.approx(p1)
        assert pp.p2 == pytest.approx(hits / total)

    def test_p2_never_exceeds_p1(self, rng):
        for _ in range(30):
            d = rng.standard_normal(int(rng.integers(3, 40))) + rng.normal(0, 0.5)
            pp = estimate_p012(d)
            assert pp.p2 <= pp.p1 + 1e-12

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            PowerParams(0.5, 0.5, 0.7)
        with pytest.raises(ValueError):
            PowerParams(-0.1, 0.5, 0.2)


class TestPowerApprox:
    def test_degenerate_point_mass_power_one(self):
        pp = PowerParams(1.0, 1.0, 1.0)
        assert power_normal_approx(pp, 100, SensParams(1.0)) >= 0.999

    def test_at_design_sensitivity_power_near_alpha(self):
        gamma = 1.5
        kappa = gamma / (1 + gamma)
        pp = PowerParams(kappa, kappa, kappa**2 + kappa * (1 - kappa) / 3)
        power = power_normal_approx(pp, 100000, SensParams(gamma, alpha=0.05))
        assert abs(power - 0.05) < 0.02

    def test_beyond_design_sensitivity_power_vanishes(self):
        pp = PowerParams(0.55, 0.55, 0.55**2 + 0.55 * 0.45 / 3)
        assert power_normal_approx(pp, 10000, SensParams(1.5)) < 0.01

    def test_dichotomy_around_design_sensitivity(self):
        pp = PowerParams(0.6, 0.6, 0.6**2 + 0.6 * 0.4 / 3)
        tilde = design_sensitivity(pp)  # 1.5
        below = [power_normal_approx(pp, n, SensParams(0.8 * tilde)) for n in (500, 2000, 10000)]
        above = [power_normal_approx(pp, n, SensParams(1.25 * tilde)) for n in (500, 2000, 10000)]
        assert below == sorted(below) and below[-1] > 0.99
        assert above == sorted(above, reverse=True) and above[-1] < 0.01

    def test_negative_variance_raises(self):
        with pytest.raises(NonPositiveVarianceError):
            power_normal_approx(PowerParams(0.9, 0.9, 0.3), 1000, SensParams(1.0))

    def test_too_few_pairs(self):
        with pytest.raises(TooFewPairsError):
            power_normal_approx(PowerParams(0.6, 0.6, 0.4), 2, SensParams(1.0))


class TestDesignSensitivity:
    def test_values(self):
        assert design_sensitivity(PowerParams(0.5, 0.5, 0.25)) == pytest.approx(1.0)
        assert design_sensitivity(PowerParams(0.75, 0.75, 0.5)) == pytest.approx(3.0)
        assert design_sensitivity(PowerParams(0.9, 0.9, 0.8)) == pytest.approx(9.0)

    def test_boundary(self):
        with pytest.raises(BoundaryP1Error):
            design_sensitivity(PowerParams(0.0, 0.0, 0.0))
        with pytest.raises(BoundaryP1Error):
            design_sensitivity(PowerParams(1.0, 1.0, 1.0))
