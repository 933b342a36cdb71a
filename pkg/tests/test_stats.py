"""Friedman statistic, Bonferroni-Dunn critical difference, rank tables."""

import numpy as np
import pytest

from cleanse.stats import (
    Q_ALPHA_05,
    RankTable,
    bonferroni_dunn_cd,
    friedman,
    friedman_chi2,
    rank_results,
)

# average ranks of the 8 compared algorithms over 25 cases
EIGHT_ALGO_RANKS = [3.56, 3.00, 3.16, 5.36, 6.24, 6.52, 7.08, 1.12]


class TestFriedman:
    def test_no_disagreement_gives_zero(self):
        for k in (3, 5, 8):
            table = RankTable(k=k, n_cases=10, avg_ranks=np.full(k, (k + 1) / 2))
            chi2, f_f = friedman(table)
            assert chi2 == pytest.approx(0.0, abs=1e-12)
            assert f_f == pytest.approx(0.0, abs=1e-12)

    def test_reference_eight_algorithm_table(self):
        table = RankTable(k=8, n_cases=25, avg_ranks=np.array(EIGHT_ALGO_RANKS))
        chi2, f_f = friedman(table)
        # frozen from direct evaluation of the formulas on these ranks
        assert chi2 == pytest.approx(130.073333, abs=1e-5)
        assert f_f == pytest.approx(69.4856804, abs=1e-6)
        assert abs(f_f - 69.4) <= 0.2  # the rounded reference value

    def test_two_algorithms_direct_formula(self):
        # perfect agreement on k=2 is the degenerate case for F, so the
        # chi-square comes from its own entry point
        table = RankTable(k=2, n_cases=10, avg_ranks=np.array([1.0, 2.0]))
        assert friedman_chi2(table) == pytest.approx(10.0, abs=1e-12)
        with pytest.raises(ValueError, match="degenerate"):
            friedman(table)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        ranks = np.array(EIGHT_ALGO_RANKS)
        base = friedman(RankTable(8, 25, ranks))
        for _ in range(10):
            perm = rng.permutation(8)
            got = friedman(RankTable(8, 25, ranks[perm]))
            assert got[0] == pytest.approx(base[0], abs=1e-9)
            assert got[1] == pytest.approx(base[1], abs=1e-9)

    def test_chi2_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(2, 30))
            ranks = rank_results(rng.random((n, k))).avg_ranks
            assert friedman_chi2(RankTable(k, n, ranks)) >= -1e-12

    def test_degenerate_denominator_rejected(self):
        # perfect agreement on k=2, N=2: chi2 = N(k-1) exactly
        table = RankTable(k=2, n_cases=2, avg_ranks=np.array([1.0, 2.0]))
        with pytest.raises(ValueError, match="degenerate"):
            friedman(table)

    def test_size_requirements(self):
        with pytest.raises(ValueError):
            friedman(RankTable(k=2, n_cases=1, avg_ranks=np.array([1.0, 2.0])))


class TestCriticalDifference:
    def test_reference_value(self):
        assert bonferroni_dunn_cd(2.690, 8, 25) == pytest.approx(1.864, abs=1e-3)
        # unrounded regression value
        assert bonferroni_dunn_cd(2.690, 8, 25) == pytest.approx(1.8636867, abs=1e-6)

    def test_vanishes_with_many_cases(self):
        assert bonferroni_dunn_cd(2.5, 8, 10**12) < 1e-4

    def test_unit_case(self):
        assert bonferroni_dunn_cd(1.0, 2, 1) == pytest.approx(1.0, abs=1e-12)

    def test_q_alpha_validated(self):
        with pytest.raises(ValueError):
            bonferroni_dunn_cd(0.0, 8, 25)

    def test_q_table_contains_reference_entry(self):
        assert Q_ALPHA_05[8] == 2.690


class TestRankResults:
    def test_single_case_strict_order(self):
        table = rank_results(np.array([[0.9, 0.8]]))
        np.testing.assert_array_equal(table.avg_ranks, [1.0, 2.0])

    def test_single_case_tie_averaged(self):
        table = rank_results(np.array([[0.9, 0.9]]))
        np.testing.assert_array_equal(table.avg_ranks, [1.5, 1.5])

    def test_strict_order_is_permutation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            k = int(rng.integers(2, 7))
            accs = rng.permutation(k)[None, :].astype(float)
            table = rank_results(accs)
            assert sorted(table.avg_ranks.tolist()) == list(range(1, k + 1))

    def test_averaging_over_cases(self):
        accs = np.array([[0.9, 0.8], [0.8, 0.9]])
        table = rank_results(accs)
        np.testing.assert_array_equal(table.avg_ranks, [1.5, 1.5])

    def test_fixed_rank_override(self):
        # two columns lack results and sit at a settled rank of 3.5 ( (3+4)/2 )
        # out of 4; the other two are ranked among themselves
        accs = np.array([[0.9, 0.8, 0.0, 0.0], [0.7, 0.8, 0.0, 0.0]])
        table = rank_results(accs, fixed_ranks={2: 3.5, 3: 3.5})
        np.testing.assert_array_equal(table.avg_ranks, [1.5, 1.5, 3.5, 3.5])

    def test_override_validated(self):
        accs = np.array([[0.9, 0.8]])
        with pytest.raises(ValueError):
            rank_results(accs, fixed_ranks={5: 1.0})
        with pytest.raises(ValueError):
            rank_results(accs, fixed_ranks={0: 3.0})

    def test_missing_entries_rejected(self):
        with pytest.raises(ValueError):
            rank_results(np.array([[0.9, np.nan]]))

    def test_sum_identity_for_complete_rankings(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n, k = int(rng.integers(1, 6)), int(rng.integers(2, 7))
            accs = rng.random((n, k))
            table = rank_results(accs)
            assert float(np.sum(table.avg_ranks)) == pytest.approx(
                k * (k + 1) / 2, abs=1e-9
            )


class TestRankTable:
    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            RankTable(k=3, n_cases=5, avg_ranks=np.array([0.5, 2.0, 3.0]))
        with pytest.raises(ValueError):
            RankTable(k=3, n_cases=5, avg_ranks=np.array([1.0, 2.0, 3.5]))
        with pytest.raises(ValueError):
            RankTable(k=3, n_cases=5, avg_ranks=np.array([1.0, 2.0]))
