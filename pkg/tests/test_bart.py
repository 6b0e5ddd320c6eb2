import math

import numpy as np
import pytest
from scipy import stats

from twophase.bart import (
    POSTERIOR_MEAN,
    BartOptions,
    ModelKind,
    chain_diagnostics,
    fit_bart,
    fit_bart_probit,
    fit_rbart,
    predict,
    sample_tree_prior,
    tree_depth,
)
from twophase.dataset import Table
from twophase.errors import (
    ColumnMismatch,
    DegenerateResponse,
    IndexOutOfRange,
    InsufficientData,
    InvalidConfig,
    NonFiniteInput,
    SingleClass,
    SingleGroup,
)


@pytest.fixture
def step_data(rng):
    x = rng.uniform(size=(200, 2))
    truth = 3.0 * (x[:, 0] > 0.5)
    return x, truth, truth + rng.normal(0.0, 0.1, size=200)


class TestFit:
    def test_recovers_step_function(self, step_data):
        x, truth, y = step_data
        chain = fit_bart(x, y, BartOptions(n_trees=20, n_burn=200, n_keep=100, thin=1), np.random.default_rng(1))
        assert chain.n_keep == 100
        assert chain.model_kind is ModelKind.CONTINUOUS
        fitted = predict(chain, x)
        assert np.sqrt(np.mean((fitted - truth) ** 2)) < 0.3

    def test_posterior_mean_is_average_of_draws(self, step_data, fast_bart):
        x, _, y = step_data
        chain = fit_bart(x, y, fast_bart, np.random.default_rng(2))
        per_draw = np.mean([predict(chain, x, d) for d in range(chain.n_keep)], axis=0)
        np.testing.assert_allclose(predict(chain, x, POSTERIOR_MEAN), per_draw, atol=1e-12)

    def test_same_seed_same_chain(self, step_data, fast_bart):
        x, _, y = step_data
        a = fit_bart(x, y, fast_bart, np.random.default_rng(3))
        b = fit_bart(x, y, fast_bart, np.random.default_rng(3))
        np.testing.assert_array_equal(predict(a, x), predict(b, x))

    def test_probit_probabilities(self, rng, fast_bart):
        x = rng.uniform(size=(300, 1))
        r = (rng.random(300) < np.where(x[:, 0] > 0.5, 0.9, 0.1)).astype(float)
        chain = fit_bart_probit(x, r, fast_bart, np.random.default_rng(4))
        p = predict(chain, x)
        assert ((p > 0) & (p < 1)).all()
        assert p[x[:, 0] > 0.6].mean() > 0.7
        assert p[x[:, 0] < 0.4].mean() < 0.3

    def test_table_input_with_categorical_column(self, rng, fast_bart):
        g = rng.choice(["a", "b", "c"], size=120)
        y = np.where(g == "b", 2.0, 0.0) + rng.normal(0.0, 0.1, size=120)
        table = Table.from_columns({"g": ("categorical", g), "x": ("continuous", rng.normal(size=120))})
        chain = fit_bart(table, y, BartOptions(n_trees=10, n_burn=100, n_keep=20, thin=1), np.random.default_rng(5))
        fitted = predict(chain, table)
        assert fitted[g == "b"].mean() - fitted[g != "b"].mean() > 1.5

    def test_diagnostics(self, step_data, fast_bart):
        x, _, y = step_data
        records = chain_diagnostics(fit_bart(x, y, fast_bart, np.random.default_rng(6)))
        assert len(records) == fast_bart.n_keep
        assert all(r["sigma"] > 0 and r["leaves"] >= fast_bart.n_trees for r in records)
        assert math.isnan(records[0]["tau2"])


class TestRandomIntercepts:
    def test_recovers_group_intercepts(self, rng):
        truth = np.array([-2.0, 0.0, 2.0])
        groups = np.repeat([1, 2, 3], 200)
        x = rng.uniform(size=(len(groups), 1))
        y = truth[groups - 1] + rng.normal(0.0, 0.1, size=len(groups))
        chain = fit_rbart(x, y, groups, BartOptions(n_trees=20, n_burn=300, n_keep=200, thin=1),
                          np.random.default_rng(7))
        assert chain.model_kind is ModelKind.CONTINUOUS_RANDOM_INTERCEPT
        delta = np.array([[d.random_intercepts[g] for g in (1, 2, 3)] for d in chain.draws])
        assert np.abs(delta.mean(axis=0) - truth).max() <= 0.1
        np.testing.assert_allclose(delta.mean(axis=1), 0.0, atol=1e-9)
        assert all(d.tau2 > 0 for d in chain.draws)

    def test_identical_groups_give_small_tau2(self, rng):
        groups = np.repeat([1, 2, 3], 200)
        x = rng.uniform(size=(len(groups), 1))
        y = rng.normal(0.0, 0.1, size=len(groups))
        chain = fit_rbart(x, y, groups, BartOptions(n_trees=20, n_burn=300, n_keep=200, thin=1),
                          np.random.default_rng(17))
        assert np.mean([d.tau2 for d in chain.draws]) <= 0.1

    def test_unseen_group_gets_zero_intercept(self, rng, fast_bart):
        groups = np.repeat([1, 2], 20)
        x = rng.uniform(size=(40, 1))
        y = np.where(groups == 1, 0.0, 5.0) + rng.normal(0.0, 0.1, size=40)
        chain = fit_rbart(x, y, groups, fast_bart, np.random.default_rng(8))
        new_x = np.full((1, 1), 0.5)
        draw = chain.draws[-1]
        np.testing.assert_allclose(predict(chain, new_x, chain.n_keep - 1, groups=[99]),
                                   draw.linear_predictor(new_x))

    def test_single_group(self, rng, fast_bart):
        with pytest.raises(SingleGroup):
            fit_rbart(rng.uniform(size=(20, 1)), rng.normal(size=20), np.ones(20), fast_bart)


class TestErrors:
    def test_too_few_units(self, fast_bart):
        with pytest.raises(InsufficientData):
            fit_bart(np.arange(5.0), np.arange(5.0), fast_bart)

    def test_length_mismatch(self, fast_bart):
        with pytest.raises(InsufficientData):
            fit_bart(np.arange(20.0), np.arange(19.0), fast_bart)

    def test_non_finite_response(self, fast_bart):
        y = np.arange(20.0)
        y[3] = np.nan
        with pytest.raises(NonFiniteInput):
            fit_bart(np.arange(20.0), y, fast_bart)

    def test_non_finite_covariate(self, fast_bart):
        x = np.arange(20.0)
        x[0] = np.inf
        with pytest.raises(NonFiniteInput):
            fit_bart(x, np.arange(20.0), fast_bart)

    def test_single_class(self, fast_bart):
        with pytest.raises(SingleClass):
            fit_bart_probit(np.arange(20.0), np.ones(20), fast_bart)

    def test_probit_needs_binary_response(self, fast_bart):
        with pytest.raises(NonFiniteInput):
            fit_bart_probit(np.arange(20.0), np.arange(20.0) % 3, fast_bart)

    def test_constant_response_warns(self, fast_bart):
        with pytest.warns(DegenerateResponse):
            fit_bart(np.arange(20.0), np.full(20, 4.0), fast_bart)

    def test_constant_response_predicts_the_constant(self, rng, fast_bart):
        x = rng.uniform(-1.0, 1.0, size=(50, 1))
        with pytest.warns(DegenerateResponse):
            chain = fit_bart(x, np.full(50, 5.0), fast_bart, np.random.default_rng(18))
        grid = np.linspace(-2.0, 2.0, 9)[:, None]
        np.testing.assert_allclose(predict(chain, grid), 5.0, atol=0.05)

    def test_zero_sigma_interpolates_exactly(self):
        opts = BartOptions(n_trees=5, n_burn=5, n_keep=5, thin=1, fixed_sigma=0.0)
        with pytest.warns(DegenerateResponse):
            chain = fit_bart(np.arange(30.0), np.full(30, 5.0), opts, np.random.default_rng(19))
        assert all(d.sigma == 0.0 for d in chain.draws)
        np.testing.assert_array_equal(predict(chain, np.arange(30.0)), 5.0)

    def test_zero_sigma_with_groups(self, rng):
        groups = np.repeat([1, 2], 15)
        y = np.where(groups == 1, -1.0, 1.0)
        opts = BartOptions(n_trees=3, n_burn=5, n_keep=5, thin=1, fixed_sigma=0.0)
        chain = fit_rbart(rng.uniform(size=(30, 1)), y, groups, opts, np.random.default_rng(20))
        draw = chain.draws[-1]
        assert draw.random_intercepts[2] - draw.random_intercepts[1] == pytest.approx(2.0)

    @pytest.mark.parametrize("changes", [
        {"alpha": 1.0},
        {"beta": -1.0},
        {"move_probabilities": (0.5, 0.5, 0.5)},
        {"move_probabilities": (0.5, 0.0, 0.5)},
        {"n_trees": 0},
        {"q": 1.0},
        {"fixed_sigma": -0.5},
        {"fixed_sigma": float("nan")},
    ])
    def test_invalid_options(self, changes):
        with pytest.raises(InvalidConfig):
            BartOptions(**changes)


class TestPredict:
    @pytest.fixture
    def chain(self, step_data, fast_bart):
        x, _, y = step_data
        return fit_bart(x, y, fast_bart, np.random.default_rng(9))

    @pytest.mark.parametrize("index", [-1, 20, "median"])
    def test_index_out_of_range(self, chain, index):
        with pytest.raises(IndexOutOfRange):
            predict(chain, np.zeros((1, 2)), index)

    def test_column_mismatch(self, chain):
        with pytest.raises(ColumnMismatch):
            predict(chain, np.zeros((3, 3)))

    def test_table_against_array_training(self, chain):
        table = Table.from_columns({"a": ("continuous", [0.1]), "b": ("continuous", [0.2])})
        with pytest.raises(ColumnMismatch):
            predict(chain, table)


class TestConjugateUpdates:
    """With the tree structure held fixed the Gibbs steps are exact draws from known conditionals."""

    def test_stump_leaf_values(self, rng):
        y = rng.normal(1.0, 2.0, size=30)
        sigma = 0.7
        opts = BartOptions(n_trees=1, n_burn=0, n_keep=3000, thin=1, move_probabilities=(0.0, 0.0, 1.0),
                           fixed_sigma=sigma)
        chain = fit_bart(np.arange(30.0), y, opts, np.random.default_rng(10))
        center, span = 0.5 * (y.min() + y.max()), y.max() - y.min()
        y_s, sigma_s = (y - center) / span, sigma / span
        prec = 1.0 / 0.25 ** 2 + len(y) / sigma_s ** 2
        mean = y_s.sum() / sigma_s ** 2 / prec
        mus = np.array([d.raw(np.zeros((1, 1)))[0] for d in chain.draws])
        assert all(d.n_leaves() == 1 for d in chain.draws)
        assert stats.kstest(mus, "norm", args=(mean, 1.0 / math.sqrt(prec))).pvalue > 0.01

    def test_error_variance(self, rng):
        y = rng.normal(0.0, 1.0, size=40)
        opts = BartOptions(n_trees=1, n_burn=0, n_keep=3000, thin=1, freeze_trees=True)
        chain = fit_bart(np.arange(40.0), y, opts, np.random.default_rng(11))
        center, span = 0.5 * (y.min() + y.max()), y.max() - y.min()
        y_s = (y - center) / span
        lam = max(np.var(y_s, ddof=1) * stats.chi2.ppf(0.1, 3.0) / 3.0, 1e-8)
        scale = 3.0 * lam + y_s @ y_s
        sigma2_s = np.array([(d.sigma / span) ** 2 for d in chain.draws])
        assert stats.kstest(scale / sigma2_s, "chi2", args=(3.0 + len(y),)).pvalue > 0.01

    def test_tree_moves_leave_the_prior_invariant(self, rng):
        x = np.arange(30.0)
        opts = BartOptions(n_trees=1, n_burn=500, n_keep=1500, thin=30, move_probabilities=(0.5, 0.5, 0.0),
                           min_leaf_size=1, flat_likelihood=True)
        chain = fit_bart(x, rng.normal(size=30), opts, np.random.default_rng(12))
        mcmc = np.array([tree_depth(d.trees[0]) for d in chain.draws])
        prior_rng = np.random.default_rng(13)
        prior = np.array([tree_depth(sample_tree_prior(x, opts, prior_rng)) for _ in range(5000)])
        table = np.array([np.bincount(np.minimum(mcmc, 4), minlength=5),
                          np.bincount(np.minimum(prior, 4), minlength=5)])
        table = table[:, table.sum(axis=0) > 0]
        assert stats.chi2_contingency(table).pvalue > 0.01
