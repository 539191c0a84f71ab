import math

import numpy as np
import pytest
from scipy import stats as sp_stats

from twoleveltest import discrepancy as dc
from twoleveltest import exactdist as ed
from twoleveltest import numerics as nm
from twoleveltest import onelevel as ol
from twoleveltest import twolevel as tl
from twoleveltest.bitgen import MT19937Source, SplitStreamSource
from twoleveltest.errors import ValidationError


class TestBinPvalues:
    def test_hand_case(self):
        hist = tl.bin_pvalues([0.0, 0.5, 1.0], 9)
        want = np.zeros(10, dtype=np.int64)
        want[[0, 5, 9]] = 1
        assert np.array_equal(hist, want)

    def test_empty(self):
        assert np.array_equal(tl.bin_pvalues([], 9), np.zeros(10, dtype=np.int64))

    def test_uniform_variates_balanced(self):
        u = SplitStreamSource(40).uniforms(10 ** 5)
        hist = tl.bin_pvalues(u, 9)
        bound = 5 * math.sqrt(10 ** 5 * 0.1 * 0.9)  # 5 binomial sigmas
        assert (np.abs(hist - 10 ** 4) <= bound).all()
        assert hist.sum() == 10 ** 5


class TestGofChi2:
    def test_exact_expectation_gives_one(self):
        null = tl.SecondLevelNull.uniform(9)
        chi2, p = tl.gof_chi2(np.full(10, 7), null)
        assert chi2 == 0.0 and p == 1.0

    def test_hand_case(self):
        null = tl.SecondLevelNull(tl.UNIFORM, [0.5, 0.5])
        chi2, p = tl.gof_chi2([7, 3], null)
        assert chi2 == pytest.approx(1.6, rel=1e-12)
        assert p == pytest.approx(nm.chi2_sf(1, 1.6), rel=1e-12)

    def test_second_level_p_uniform_under_null(self):
        # p_second should be ~U(0,1) for multinomial draws from the null
        rng = np.random.default_rng(17)
        null = tl.SecondLevelNull.uniform(9)
        N, reps = 4000, 10 ** 4
        draws = rng.multinomial(N, null.probs, size=reps)
        ps = []
        exp = N * null.probs
        for y in draws:
            chi2 = ((y - exp) ** 2 / exp).sum()
            ps.append(nm.chi2_sf(9, chi2))
        stat = sp_stats.kstest(ps, "uniform")
        assert stat.pvalue > 1e-3

    def test_empty_histogram_rejected(self):
        with pytest.raises(ValidationError):
            tl.gof_chi2([0, 0], tl.SecondLevelNull.uniform(1))


class TestSecondLevelNull:
    def test_uniform_probs(self):
        null = tl.SecondLevelNull.uniform(9)
        assert np.allclose(null.probs, 0.1)
        assert null.kind == tl.UNIFORM

    def test_from_distribution_kinds(self):
        d = ed.CategoryDistribution(np.full(10, 0.1), 9, "exact", 1.0)
        assert tl.SecondLevelNull.from_distribution(d).kind == tl.EXACT
        d2 = ed.CategoryDistribution(np.full(10, 0.1), 9, "monte-carlo", 1.0)
        assert tl.SecondLevelNull.from_distribution(d2).kind == tl.MC

    def test_zero_prob_rejected(self):
        with pytest.raises(ValidationError):
            tl.SecondLevelNull(tl.EXACT, [0.5, 0.5, 0.0])

    def test_per_component_lookup(self):
        per = {1: np.full(10, 0.1), -1: np.full(10, 0.1)}
        null = tl.SecondLevelNull(tl.EXACT, per_component=per)
        assert np.array_equal(null.probs_for(1), per[1])
        with pytest.raises(ValidationError):
            null.probs_for(3)

    def test_file_roundtrip(self, tmp_path):
        q = np.array([0.11, 0.09, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1])
        d = ed.CategoryDistribution(q, 9, "exact", 1.0)
        d.save(tmp_path / "d.json")
        null = tl.SecondLevelNull.from_file(tmp_path / "d.json")
        assert np.allclose(null.probs, q)


class TestRunTwoLevel:
    def test_deterministic(self):
        null = tl.SecondLevelNull.uniform(9)
        a = tl.run_two_level(MT19937Source(5), "frequency", 1024, 300, null)
        b = tl.run_two_level(MT19937Source(5), "frequency", 1024, 300, null)
        assert np.array_equal(a.histogram, b.histogram)
        assert a.p_second == b.p_second

    def test_chunking_invariance(self):
        null = tl.SecondLevelNull.uniform(9)
        a = tl.run_two_level(MT19937Source(6), "frequency", 1024, 500, null,
                             chunk_bits=1 << 14)
        b = tl.run_two_level(MT19937Source(6), "frequency", 1024, 500, null,
                             chunk_bits=1 << 22)
        assert np.array_equal(a.histogram, b.histogram)

    def test_histogram_totals(self):
        null = tl.SecondLevelNull.uniform(9)
        res = tl.run_two_level(MT19937Source(7), "block_frequency", 12800, 400, null,
                               params={"m": 128})
        assert res.histogram.sum() == 400
        assert res.N == 400 and res.discarded == 0
        d = res.to_dict()
        assert d["null"] == "uniform" and d["source"]["kind"] == "mt19937"

    def test_unaligned_n_slow_path(self):
        null = tl.SecondLevelNull.uniform(9)
        res = tl.run_two_level(MT19937Source(8), "frequency", 1001, 20, null)
        assert res.histogram.sum() == 20

    def test_excursions_accounting(self):
        null = tl.SecondLevelNull.uniform(9)
        res = tl.run_two_level(SplitStreamSource(3), "random_excursions", 16000, 40,
                               null, params={"cycles": 40})
        assert len(res.components) == 8
        for comp in res.components:
            assert comp.histogram.sum() == 40
        assert res.discarded >= 0

    def test_excursions_discard_count_matches_sequential_scan(self):
        params = {"cycles": 120}
        null = tl.SecondLevelNull.uniform(9)
        res = tl.run_two_level(SplitStreamSource(44), "random_excursions", 24000, 25,
                               null, params=params)
        src = SplitStreamSource(44)
        discarded = valid = 0
        while valid < 25:
            r = ol.random_excursions_test(src.next_block(24000), 120)
            if r is None:
                discarded += 1
            else:
                valid += 1
        assert res.discarded == discarded

    def test_block_frequency_words_path_equals_bytes_path(self):
        null = tl.SecondLevelNull.uniform(9)
        res_words = tl.run_two_level(MT19937Source(9), "block_frequency", 25600, 200,
                                     null, params={"m": 128})
        class Plain(MT19937Source):
            next_words = None  # force the byte-path kernel
        res_bytes = tl.run_two_level(Plain(9), "block_frequency", 25600, 200,
                                     null, params={"m": 128})
        assert np.array_equal(res_words.histogram, res_bytes.histogram)

    def test_single_component_accessors_guard(self):
        null = tl.SecondLevelNull.uniform(9)
        res = tl.run_two_level(SplitStreamSource(3), "random_excursions", 16000, 10,
                               null, params={"cycles": 30})
        with pytest.raises(ValidationError):
            _ = res.p_second


@pytest.fixture(scope="module")
def setup():
    spec = ol.longest_run_spec(10 ** 5, 10000)  # n_b = 10, coarse q
    dist = ed.enumerate_q(spec, workers=1)
    rep = dc.report_from_distribution(dist)
    return spec, dist, rep


class TestCorrectedNullBehavior:
    """With the exact q as the null, the second level is calibrated even at
    the risky size computed for the uniform null."""

    def test_exact_null_calibrated_at_risky_size(self, setup):
        spec, dist, rep = setup
        # synthetic first-level histograms drawn from the true q itself
        rng = np.random.default_rng(123)
        null = tl.SecondLevelNull.from_distribution(dist)
        N = rep.n_risky
        rejections = 0
        runs = 100
        exp = N * null.probs
        for _ in range(runs):
            y = rng.multinomial(N, dist.q / dist.q.sum())
            chi2 = ((y - exp) ** 2 / exp).sum()
            if nm.chi2_sf(9, chi2) < 0.0001:
                rejections += 1
        assert rejections <= 3

    def test_uniform_null_mean_inside_window_at_risky_size(self, setup):
        spec, dist, rep = setup
        rng = np.random.default_rng(321)
        N = rep.n_risky
        p = np.full(10, 0.1)
        exp = N * p
        chi2s = []
        for _ in range(60):
            y = rng.multinomial(N, dist.q / dist.q.sum())
            chi2s.append(((y - exp) ** 2 / exp).sum())
        lo, hi = dc.expected_chi2_window(N, rep.delta, rep.u, 9)
        se = np.std(chi2s, ddof=1) / math.sqrt(len(chi2s))
        assert lo - 4 * se <= np.mean(chi2s) <= hi + 4 * se

    def test_live_two_level_with_exact_null(self, setup):
        spec, dist, rep = setup
        null = tl.SecondLevelNull.from_distribution(dist)
        res = tl.run_two_level(MT19937Source(77), "longest_run", 10 ** 5,
                               min(rep.n_risky, 4000), null, params={"m": 10000})
        assert res.null_kind == tl.EXACT
        assert res.histogram.sum() == min(rep.n_risky, 4000)
