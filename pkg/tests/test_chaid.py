import numpy as np
import pytest
from scipy.stats import chi2_contingency

from twophase.dataset import Table
from twophase.errors import InvalidConfig
from twophase.propensity.chaid import (
    ChaidOptions,
    Discretizer,
    bonferroni_multiplier,
    chaid_cells,
    chaid_tree,
    merge_categories,
    pearson_chi2,
)


def _responses(*groups):
    """Codes and 0/1 responses with exactly ``hits`` of ``size`` responding per category."""
    codes, r = [], []
    for code, (size, hits) in enumerate(groups):
        codes.append(np.full(size, code))
        r.append(np.r_[np.ones(hits), np.zeros(size - hits)])
    return np.concatenate(codes), np.concatenate(r)


class TestStatistics:
    def test_pearson_matches_scipy(self):
        table = np.array([[30.0, 20.0], [10.0, 40.0]])
        stat, p = pearson_chi2(table)
        expected = chi2_contingency(table, correction=False)
        assert stat == pytest.approx(expected[0])
        assert p == pytest.approx(expected[1])

    def test_degenerate_table(self):
        assert pearson_chi2(np.array([[5.0, 0.0], [7.0, 0.0]])) == (0.0, 1.0)

    @pytest.mark.parametrize("k, c, ordinal, expected", [
        (5, 2, True, 4),
        (4, 2, False, 7),
        (3, 3, False, 1),
        (6, 3, True, 10),
        (4, 1, False, 1),
    ])
    def test_bonferroni_multiplier(self, k, c, ordinal, expected):
        assert bonferroni_multiplier(k, c, ordinal) == expected


class TestMerging:
    def test_ordinal_merges_only_neighbours(self):
        codes, r = _responses((100, 10), (100, 90), (100, 10))
        assert merge_categories(codes, r, ordinal=True, alpha_merge=0.05) == [(0,), (1,), (2,)]

    def test_nominal_merges_any_pair(self):
        codes, r = _responses((100, 10), (100, 90), (100, 10))
        assert merge_categories(codes, r, ordinal=False, alpha_merge=0.05) == [(0, 2), (1,)]


class TestTree:
    def test_strong_predictor_gives_two_cells(self):
        codes, r = _responses((200, 40), (200, 160))
        partition = chaid_tree(codes, r, (False,)).partition
        assert partition.n_cells == 2
        np.testing.assert_allclose(sorted(partition.response_rates), [0.2, 0.8])

    def test_independent_predictor_gives_one_cell(self):
        codes, r = _responses((100, 50), (100, 50))
        assert chaid_tree(codes, r, (False,)).partition.n_cells == 1

    def test_small_node_does_not_split(self):
        codes, r = _responses((20, 2), (20, 18))
        assert chaid_tree(codes, r, (False,), ChaidOptions(min_node=50)).partition.n_cells == 1

    def test_small_children_do_not_split(self):
        codes, r = _responses((20, 2), (200, 180))
        assert chaid_tree(codes, r, (False,), ChaidOptions(min_child=25)).partition.n_cells == 1

    def test_cells_without_respondents_are_merged(self):
        codes, r = _responses((100, 0), (100, 50), (100, 90))
        partition = chaid_tree(codes, r, (False,)).partition
        assert partition.n_cells == 2
        assert (partition.respondents > 0).all()
        # the empty category joins the closest response rate
        assert partition.cell_id[0] == partition.cell_id[150]
        np.testing.assert_array_equal(sorted(partition.sizes), [100, 200])

    def test_adjustments_sum_to_cell_sizes(self, rng):
        codes = rng.integers(0, 4, size=(600, 2))
        r = (rng.random(600) < 0.2 + 0.15 * codes[:, 0]).astype(float)
        partition = chaid_tree(codes, r, (True, False)).partition
        a = 1.0 / partition.unit_propensity()
        for cell in range(partition.n_cells):
            members = (partition.cell_id == cell) & (r == 1)
            assert a[members].sum() == pytest.approx(partition.sizes[cell])

    def test_deterministic(self, rng):
        codes = rng.integers(0, 3, size=(300, 2))
        r = (rng.random(300) < 0.3 + 0.2 * codes[:, 1]).astype(float)
        a = chaid_tree(codes, r, (False, False)).partition
        b = chaid_tree(codes.copy(), r.copy(), (False, False)).partition
        np.testing.assert_array_equal(a.cell_id, b.cell_id)

    def test_unseen_category_follows_largest_child(self):
        codes, r = _responses((100, 10), (300, 270))
        tree = chaid_tree(codes, r, (False,))
        assert tree.assign(np.array([[7]]))[0] == tree.assign(np.array([[1]]))[0]


class TestCells:
    def test_continuous_column_is_binned(self, rng):
        x = rng.normal(size=500)
        r = (x > 0).astype(float)
        table = Table.from_columns({"x": ("continuous", x), "g": ("categorical", rng.choice(["a", "b"], 500))})
        discretizer = Discretizer.fit(table, n_bins=4)
        assert discretizer.ordinal == (True, False)
        assert set(np.unique(discretizer.transform(table)[:, 0])) == {0, 1, 2, 3}
        assert chaid_cells(table, r, ChaidOptions(n_bins=4)).n_cells >= 2

    def test_invalid_options(self):
        with pytest.raises(InvalidConfig):
            ChaidOptions(alpha_merge=0.0)
