import math

import numpy as np
import pytest

from twoleveltest import discrepancy as dc
from twoleveltest import published
from twoleveltest.errors import DomainError, ValidationError
from twoleveltest.exactdist import CategoryDistribution
from twoleveltest.numerics import chi2_isf

UNIFORM = np.full(10, 0.1)


class TestChi2Discrepancy:
    def test_zero_at_null(self):
        assert dc.chi2_discrepancy(UNIFORM, UNIFORM) == 0.0

    def test_longest_column_matches_published(self):
        q = np.array(published.T1["longest_run"]["q"])
        delta = dc.chi2_discrepancy(q, UNIFORM)
        assert abs(delta - published.T1["longest_run"]["delta"]) <= 1e-8

    def test_excursions_x1_matches_published(self):
        q = np.array(published.T3[1]["q"])
        assert abs(dc.chi2_discrepancy(q, UNIFORM) - published.T3[1]["delta"]) <= 1e-8

    def test_validation(self):
        with pytest.raises(ValidationError):
            dc.chi2_discrepancy([0.5, 0.5], [0.5, 0.4, 0.1])
        with pytest.raises(ValidationError):
            dc.chi2_discrepancy([0.5, 0.5], [1.0, 0.0])
        with pytest.raises(ValidationError):
            dc.chi2_discrepancy([0.9, 0.2], [0.5, 0.5])


class TestMaxRatioDev:
    def test_zero_at_null(self):
        assert dc.max_ratio_dev(UNIFORM, UNIFORM) == 0.0

    def test_longest_column(self):
        q = np.array(published.T1["longest_run"]["q"])
        assert dc.max_ratio_dev(q, UNIFORM) == pytest.approx(0.018646, abs=1e-9)

    def test_permutation_invariance(self):
        q = np.array(published.T1["linear_complexity"]["q"])
        perm = np.random.default_rng(1).permutation(10)
        assert dc.max_ratio_dev(q[perm], UNIFORM[perm]) == dc.max_ratio_dev(q, UNIFORM)
        assert dc.chi2_discrepancy(q[perm], UNIFORM[perm]) == pytest.approx(
            dc.chi2_discrepancy(q, UNIFORM), rel=1e-12
        )


class TestRiskySafeSizes:
    def test_longest_roundtrip(self):
        q = np.array(published.T1["longest_run"]["q"])
        delta = dc.chi2_discrepancy(q, UNIFORM)
        u = dc.max_ratio_dev(q, UNIFORM)
        n_safe, n_risky = dc.risky_safe_sizes(delta, u)
        assert abs(n_safe - 20950) <= 1
        assert abs(n_risky - 234769) <= 1

    def test_excursions_x4_roundtrip(self):
        q = np.array(published.T3[4]["q"])
        delta = dc.chi2_discrepancy(q, UNIFORM)
        u = dc.max_ratio_dev(q, UNIFORM)
        n_safe, n_risky = dc.risky_safe_sizes(delta, u)
        assert abs(n_safe - 5042) <= 1
        assert abs(n_risky - 62555) <= 1

    def test_formula_plugin_unit_safe_size(self):
        delta = chi2_isf(9, 0.25) - 9
        n_safe, _ = dc.risky_safe_sizes(delta, 0.0)
        assert n_safe == 1

    def test_no_safe_size_signal(self):
        n_safe, n_risky = dc.risky_safe_sizes(0.1, u=2.0)
        assert n_safe is None and n_risky >= 1

    def test_nonpositive_delta(self):
        with pytest.raises(DomainError):
            dc.risky_safe_sizes(0.0, 0.0)


class TestExpectedWindow:
    def test_degenerate_when_u_zero(self):
        lo, hi = dc.expected_chi2_window(100, 1e-3, 0.0, 9)
        assert lo == hi == pytest.approx(9.1)

    def test_central_mean(self):
        assert dc.expected_chi2_window(50, 0.0, 0.0, 9) == (9.0, 9.0)

    def test_longest_window_contains_quantile(self):
        entry = published.T1["longest_run"]
        q = np.array(entry["q"])
        delta = dc.chi2_discrepancy(q, UNIFORM)
        u = dc.max_ratio_dev(q, UNIFORM)
        lo, hi = dc.expected_chi2_window(20950, delta, u, 9)
        assert lo == pytest.approx(11.05, abs=0.01)
        assert hi == pytest.approx(11.39, abs=0.01)
        # flooring N_safe puts the window top at most delta below the quantile
        assert lo <= chi2_isf(9, 0.25) <= hi + delta


class TestRejectionProbability:
    def test_lambda_zero_is_significance(self):
        for sig in (0.25, 0.01, 1e-4):
            assert dc.rejection_probability(9, 0.0, sig) == pytest.approx(sig, rel=1e-12)

    def test_monotone_in_lambda(self):
        vals = [dc.rejection_probability(9, lam, 1e-4) for lam in (0, 1, 2, 5, 10)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_safe_size_rejection_level(self):
        got = dc.safe_size_rejection_probability()
        assert got == pytest.approx(published.SAFE_SIZE_REJECTION, abs=1e-6)


class TestInequalitySimulation:
    def test_mean_window_and_mean_shift(self):
        entry = published.T1["longest_run"]
        q = np.array(entry["q"])
        q = q / q.sum()
        delta = dc.chi2_discrepancy(q, UNIFORM)
        u = dc.max_ratio_dev(q, UNIFORM)
        N, reps = 20950, 3000
        rng = np.random.default_rng(42)
        y = rng.multinomial(N, q, size=reps)
        exp = N * UNIFORM
        chi2 = (((y - exp) ** 2) / exp).sum(axis=1)
        lo, hi = dc.expected_chi2_window(N, delta, u, 9)
        se = chi2.std(ddof=1) / math.sqrt(reps)
        assert lo - 4 * se <= chi2.mean() <= hi + 4 * se
        delta_hat = (chi2.mean() - 9) / N
        assert abs(delta_hat - delta) <= 4 * se / N + u * 9 / N


class TestReportFromDistribution:
    def test_report_fields(self):
        q = np.array(published.T1["linear_complexity"]["q"])
        dist = CategoryDistribution(q / q.sum(), 9, "exact", 1.0)
        rep = dc.report_from_distribution(dist)
        assert rep.q_source == "exact"
        assert rep.nu == 9
        assert rep.quantile_safe.x_alpha == pytest.approx(11.38875, abs=1e-4)
        d = rep.to_dict()
        assert d["n_safe"] == rep.n_safe and "quantiles" in d
