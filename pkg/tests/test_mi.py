import numpy as np
import pytest

from twophase.bart import BartOptions, fit_bart, fit_bart_probit
from twophase.dataset import DesignFrame, Table
from twophase.errors import ChainTooShort, CovariateMismatch, DegenerateBetween, DegenerateResponse, EmptyInput
from twophase.estimators import weighted_mean
from twophase.mi import impute_datasets, imputation_covariates, mi_estimate_mean, rubin_combine


def _standardized(values):
    values = np.asarray(values, dtype=float)
    return (values - values.mean()) / values.std(ddof=1)


class TestRubinCombine:
    def test_ten_imputations(self):
        result = rubin_combine(3.0 + _standardized(np.arange(10)), np.ones(10))
        assert result.estimate == pytest.approx(3.0, abs=1e-12)
        assert result.between == pytest.approx(1.0, abs=1e-12)
        assert result.total_variance == pytest.approx(2.1, abs=1e-10)
        assert result.df == pytest.approx(9.0 * (21.0 / 11.0) ** 2, abs=1e-10)

    def test_two_imputations(self):
        result = rubin_combine([0.0, 2.0], [1.0, 1.0], 2)
        assert (result.estimate, result.between) == (1.0, 2.0)
        assert result.total_variance == pytest.approx(4.0, abs=1e-10)
        assert result.df == pytest.approx(16.0 / 9.0, abs=1e-10)

    def test_identical_estimates(self):
        with pytest.warns(DegenerateBetween):
            result = rubin_combine([1.5] * 5, [0.3] * 5)
        assert (result.estimate, result.between) == (1.5, 0.0)
        assert result.total_variance == pytest.approx(0.3)
        assert result.df == 1e6

    def test_components_recombine_exactly(self, rng):
        result = rubin_combine(rng.normal(size=10), rng.uniform(0.5, 2.0, size=10))
        D = result.n_imputations
        assert result.total_variance == pytest.approx(result.within + (1 + 1 / D) * result.between, abs=1e-12)
        expected_df = (D - 1) * (1 + D / (D + 1) * result.within / result.between) ** 2
        assert result.df == pytest.approx(expected_df, rel=1e-12)

    def test_more_between_variance_means_fewer_df_and_wider_interval(self):
        spread = _standardized(np.arange(10))
        narrow = rubin_combine(spread, np.ones(10))
        wide = rubin_combine(2.0 * spread, np.ones(10))
        assert wide.df < narrow.df
        assert wide.width > narrow.width

    @pytest.mark.parametrize("estimates, variances, D", [
        ([1.0], [1.0], None),
        ([1.0, 2.0], [1.0, -1.0], None),
        ([1.0, 2.0], [1.0, 1.0], 3),
    ])
    def test_invalid_input(self, estimates, variances, D):
        with pytest.raises(EmptyInput):
            rubin_combine(estimates, variances, D)

    def test_record(self):
        record = rubin_combine([0.0, 2.0], [1.0, 1.0]).to_record()
        assert record["D"] == 2
        assert record["width"] == pytest.approx(record["upper"] - record["lower"])


@pytest.fixture
def imputation_problem(rng):
    n = 50
    x = rng.uniform(size=n)
    y = 1.0 + 2.0 * x + rng.normal(0.0, 0.3, size=n)
    observed = np.arange(n) < 30
    table = Table.from_columns({"x": ("continuous", x)})
    return table, np.where(observed, y, np.nan), observed


class TestImpute:
    @pytest.fixture
    def chain(self, imputation_problem, fast_bart):
        table, outcome, observed = imputation_problem
        return fit_bart(table.take(observed), outcome[observed], fast_bart, np.random.default_rng(1))

    def test_observed_values_pass_through(self, imputation_problem, chain):
        table, outcome, observed = imputation_problem
        completed = impute_datasets(chain, table, outcome, 10, np.random.default_rng(2))
        assert len(completed) == 10
        for c in completed:
            np.testing.assert_array_equal(c.values[observed], outcome[observed])
            assert not np.isnan(c.values).any()
            np.testing.assert_array_equal(c.imputed, ~observed)
        assert [c.draw_index for c in completed] == list(range(10, 20))

    def test_imputations_vary(self, imputation_problem, chain):
        table, outcome, _ = imputation_problem
        completed = impute_datasets(chain, table, outcome, 10, np.random.default_rng(3))
        assert len({c.values[-1] for c in completed}) > 1

    def test_datasets_are_read_only(self, imputation_problem, chain):
        table, outcome, _ = imputation_problem
        completed = impute_datasets(chain, table, outcome, 2, np.random.default_rng(4))
        with pytest.raises(ValueError):
            completed[0].values[0] = 0.0

    @pytest.mark.parametrize("D", [0, 21])
    def test_chain_too_short(self, imputation_problem, chain, D):
        table, outcome, _ = imputation_problem
        with pytest.raises(ChainTooShort) as info:
            impute_datasets(chain, table, outcome, D, np.random.default_rng(5))
        assert info.value.available == 20

    def test_covariate_mismatch(self, imputation_problem, chain):
        _, outcome, _ = imputation_problem
        other = Table.from_columns({"u": ("continuous", np.zeros(len(outcome)))})
        with pytest.raises(CovariateMismatch):
            impute_datasets(chain, other, outcome, 5, np.random.default_rng(6))

    def test_outcome_length_mismatch(self, imputation_problem, chain):
        table, outcome, _ = imputation_problem
        with pytest.raises(CovariateMismatch):
            impute_datasets(chain, table, outcome[:-1], 5, np.random.default_rng(7))

    def test_zero_sigma_imputes_the_constant(self, imputation_problem):
        table, _, observed = imputation_problem
        opts = BartOptions(n_trees=5, n_burn=20, n_keep=10, thin=1, fixed_sigma=0.0)
        with pytest.warns(DegenerateResponse):
            chain = fit_bart(table.take(observed), np.full(observed.sum(), 3.0), opts, np.random.default_rng(8))
        outcome = np.where(observed, 3.0, np.nan)
        for c in impute_datasets(chain, table, outcome, 5, np.random.default_rng(9)):
            np.testing.assert_array_equal(c.values, 3.0)

    def test_binary_outcome(self, imputation_problem, fast_bart):
        table, _, observed = imputation_problem
        x = table.column("x")
        r = (x > 0.5).astype(float)
        r[:2] = [0.0, 1.0]
        chain = fit_bart_probit(table.take(observed), r[observed], fast_bart, np.random.default_rng(10))
        outcome = np.where(observed, r, np.nan)
        for c in impute_datasets(chain, table, outcome, 5, np.random.default_rng(11)):
            assert set(np.unique(c.values)) <= {0.0, 1.0}


def _design(n):
    return DesignFrame(stratum_id=np.repeat([1, 2], n // 2), cluster_id=np.arange(n) // 5 + 1,
                       weight=np.linspace(1.0, 3.0, n), phase2_selected=np.ones(n), phase2_respondent=np.ones(n))


class TestMiEstimate:
    def test_complete_data_reproduces_weighted_mean(self, imputation_problem, fast_bart):
        table, outcome, observed = imputation_problem
        full = np.where(observed, outcome, 2.0)
        chain = fit_bart(table, full, fast_bart, np.random.default_rng(12))
        completed = impute_datasets(chain, table, full, 5, np.random.default_rng(13))
        design = _design(len(full))
        with pytest.warns(DegenerateBetween):
            result = mi_estimate_mean(completed, design)
        assert result.estimate == pytest.approx(weighted_mean(full, design.weight), rel=1e-12)
        assert np.ptp(result.estimates) == 0.0

    def test_combined_estimate_within_per_imputation_range(self, imputation_problem, fast_bart):
        table, outcome, observed = imputation_problem
        chain = fit_bart(table.take(observed), outcome[observed], fast_bart, np.random.default_rng(14))
        completed = impute_datasets(chain, table, outcome, 10, np.random.default_rng(15))
        result = mi_estimate_mean(completed, _design(len(outcome)))
        assert result.estimates.min() <= result.estimate <= result.estimates.max()
        assert result.lower < result.estimate < result.upper


def test_imputation_covariates_add_log_adjustment():
    table = Table.from_columns({"x": ("continuous", [0.0, 1.0])})
    design = DesignFrame(stratum_id=[1, 1], cluster_id=[1, 2], weight=[1.0, 1.0],
                         phase2_selected=[1, 1], phase2_respondent=[1, 0])
    features = imputation_covariates(table, design, np.array([1.0, np.e]))
    assert features.names == ["x", "stratum", "cluster", "log_w", "log_a"]
    np.testing.assert_allclose(features.column("log_a"), [0.0, 1.0])
