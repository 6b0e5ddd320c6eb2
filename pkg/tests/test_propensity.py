import numpy as np
import pytest
from scipy.special import expit

from twophase.dataset import DesignFrame, Table
from twophase.errors import InvalidConfig, NonPositiveInput, Separation, SingularDesign
from twophase.propensity import fit_logistic, logistic_predict
from twophase.propensity.adjustment import (
    AdjustmentMethod,
    AdjustmentOptions,
    AdjustmentResult,
    design_features,
    nonresponse_adjustment,
    numeric_matrix,
    subsample_weights,
)
from twophase.propensity.lasso import LassoOptions, cv_deviance, lambda_max, lasso_logistic_select, lasso_path


def _design(respondent, clusters=None):
    n = len(respondent)
    clusters = np.arange(1, n + 1) if clusters is None else clusters
    return DesignFrame(stratum_id=np.ones(n), cluster_id=clusters, weight=np.full(n, 2.0),
                       phase2_selected=np.ones(n), phase2_respondent=respondent)


class TestLogistic:
    def test_intercept_only_balanced(self):
        coef = fit_logistic(np.empty((10, 0)), np.array([0, 1] * 5))
        np.testing.assert_allclose(coef, [0.0], atol=1e-6)

    def test_recovers_coefficients(self, rng):
        X = rng.normal(size=(5000, 2))
        truth = np.array([-0.5, 1.0, -2.0])
        r = (rng.random(5000) < expit(truth[0] + X @ truth[1:])).astype(float)
        np.testing.assert_allclose(fit_logistic(X, r), truth, atol=0.15)

    def test_score_equations_vanish(self, rng):
        X = rng.normal(size=(500, 3))
        r = (rng.random(500) < expit(0.3 + X[:, 0])).astype(float)
        coef = fit_logistic(X, r)
        design = np.column_stack([np.ones(500), X])
        assert np.max(np.abs(design.T @ (r - logistic_predict(coef, X)))) < 1e-6

    def test_separation(self):
        x = np.arange(40.0)
        with pytest.raises(Separation):
            fit_logistic(x, (x > 20).astype(float))

    def test_single_class(self):
        with pytest.raises(Separation):
            fit_logistic(np.arange(10.0), np.ones(10))

    def test_singular_design(self, rng):
        x = rng.normal(size=50)
        r = (rng.random(50) < 0.5).astype(float)
        with pytest.raises(SingularDesign):
            fit_logistic(np.column_stack([x, x]), r)


class TestLasso:
    @pytest.fixture
    def data(self, rng):
        X = rng.normal(size=(800, 10))
        r = (rng.random(800) < expit(0.2 + 1.5 * X[:, 0] - 1.5 * X[:, 3])).astype(float)
        return X, r

    def test_nothing_selected_at_lambda_max(self, data):
        X, r = data
        path = lasso_path(X, r, [lambda_max(X, r) * 1.0001])
        assert path.selected(0) == ()

    def test_duplicated_column_enters_once(self, data):
        X, r = data
        wide = np.column_stack([X[:, 0], X[:, 0], X[:, 5]])
        path = lasso_path(wide, r, [0.3 * lambda_max(wide, r)])
        assert len(set(path.selected(0)) & {0, 1}) == 1

    def test_path_grows_as_lambda_shrinks(self, data):
        X, r = data
        top = lambda_max(X, r)
        path = lasso_path(X, r, [top * 0.05, top * 0.5, top * 1.0001])
        np.testing.assert_allclose(path.lambdas, [top * 1.0001, top * 0.5, top * 0.05])
        assert path.selected(0) == ()
        assert {0, 3} <= set(path.selected(2))

    def test_cross_validation_beats_null_model(self, data, rng):
        X, r = data
        lambdas, deviance = cv_deviance(X, r, rng, LassoOptions(n_lambdas=20))
        assert len(lambdas) == len(deviance) == 20
        assert (np.diff(lambdas) < 0).all()
        assert deviance.min() < deviance[0]

    def test_selects_signal_columns(self, data):
        X, r = data
        picked = lasso_logistic_select(X, r, rng=np.random.default_rng(1), opts=LassoOptions(n_lambdas=20))
        assert {0, 3} <= set(picked)

    def test_single_class(self, data):
        X, _ = data
        with pytest.raises(Separation):
            lasso_path(X, np.zeros(len(X)))

    def test_invalid_folds(self):
        with pytest.raises(InvalidConfig):
            LassoOptions(n_folds=1)


class TestAdjustment:
    @pytest.fixture
    def eight_units(self):
        return Table.from_columns({"z": ("binary", [0, 1, 0, 1, 0, 1, 0, 1]),
                                   "x": ("continuous", np.linspace(-1.0, 1.0, 8))})

    @pytest.mark.parametrize("method", list(AdjustmentMethod))
    def test_everyone_responds(self, eight_units, method):
        result = nonresponse_adjustment(method, eight_units, _design(np.ones(8)))
        np.testing.assert_array_equal(result.adjustment, 1.0)
        np.testing.assert_array_equal(result.predict_adjustment(eight_units, _design(np.ones(8))), 1.0)

    def test_single_cell_half_respond(self, eight_units):
        result = nonresponse_adjustment("chaid", eight_units, _design(np.array([1, 1, 0, 0, 1, 1, 0, 0])))
        assert result.metadata["cells"] == 1
        np.testing.assert_allclose(result.respondent_adjustment, 2.0)

    def test_respondent_adjustments_restore_cell_sizes(self, rng):
        z = rng.integers(0, 3, size=300)
        r = (rng.random(300) < np.array([0.3, 0.6, 0.9])[z]).astype(float)
        table = Table.from_columns({"z": ("categorical", z)})
        result = nonresponse_adjustment(AdjustmentMethod.CHAID, table, _design(r))
        assert result.respondent_adjustment.sum() == pytest.approx(300.0)

    def test_clipping(self):
        result = AdjustmentResult(method=AdjustmentMethod.LGM, fitted_propensity=np.array([0.001, 0.5, 1.0]),
                                  respondent=np.array([1, 1, 0]), min_propensity=0.01, model=None)
        np.testing.assert_allclose(result.adjustment, [100.0, 2.0, 1.0])
        np.testing.assert_allclose(result.respondent_adjustment, [100.0, 2.0])
        assert [rec["unit"] for rec in result.to_records()] == [1, 2, 3]

    def test_logistic_screens_wide_covariate_sets(self, rng):
        columns = {f"x{i}": ("continuous", rng.normal(size=600)) for i in range(1, 9)}
        table = Table.from_columns(columns)
        r = (rng.random(600) < expit(2.0 * table.column("x1"))).astype(float)
        opts = AdjustmentOptions(lasso=LassoOptions(n_lambdas=20))
        result = nonresponse_adjustment("LGM", table, _design(r), opts, np.random.default_rng(2))
        assert "x1" in result.metadata["covariates"]
        assert set(result.metadata["covariates"]) <= set(table.names)
        assert ((result.fitted_propensity > 0) & (result.fitted_propensity < 1)).all()

    @pytest.mark.parametrize("method", [AdjustmentMethod.BART, AdjustmentMethod.RBART])
    def test_tree_propensity_predicts_its_own_fit(self, rng, fast_bart, method):
        x = rng.normal(size=60)
        table = Table.from_columns({"x": ("continuous", x)})
        r = (rng.random(60) < expit(x)).astype(float)
        r[:2] = [0, 1]
        design = _design(r, clusters=np.repeat(np.arange(1, 7), 10))
        opts = AdjustmentOptions(bart=fast_bart)
        result = nonresponse_adjustment(method, table, design, opts, np.random.default_rng(3))
        np.testing.assert_allclose(result.predict_adjustment(table, design), result.adjustment)
        assert (result.adjustment >= 1.0).all()

    def test_unknown_method(self, eight_units):
        with pytest.raises(InvalidConfig):
            nonresponse_adjustment("kernel", eight_units, _design(np.ones(8)))

    def test_design_features(self):
        table = Table.from_columns({"x": ("continuous", [1.0, 2.0])})
        design = DesignFrame(stratum_id=[1, 2], cluster_id=[5, 6], weight=[1.0, np.e],
                             phase2_selected=[1, 1], phase2_respondent=[1, 0])
        features = design_features(table, design, include_cluster=False)
        assert features.names == ["x", "stratum", "log_w"]
        np.testing.assert_allclose(features.column("log_w"), [0.0, 1.0])
        X, sources = numeric_matrix(features)
        assert sources == ["x", "stratum", "log_w"]
        np.testing.assert_array_equal(X[:, 1], [0.0, 1.0])


class TestSubsampleWeights:
    def test_worked_example(self):
        np.testing.assert_allclose(subsample_weights([10.0], 0.5, np.array([2.0])), [40.0])

    def test_identity_when_everyone_is_kept(self):
        w = np.array([1.5, 3.0, 7.0])
        np.testing.assert_allclose(subsample_weights(w, 1.0, np.ones(3)), w)

    def test_homogeneous_in_phase1_weights(self):
        w, a = np.array([1.0, 2.0]), np.array([1.5, 3.0])
        np.testing.assert_allclose(subsample_weights(7 * w, 0.4, a), 7 * subsample_weights(w, 0.4, a))

    def test_uses_respondent_adjustments(self):
        result = AdjustmentResult(method=AdjustmentMethod.CHAID, fitted_propensity=np.array([0.5, 0.25, 0.5]),
                                  respondent=np.array([1, 0, 1]), min_propensity=0.01, model=None)
        np.testing.assert_allclose(subsample_weights([1.0, 3.0], 0.5, result), [4.0, 12.0])

    @pytest.mark.parametrize("w, p, a", [
        ([0.0], 0.5, [1.0]),
        ([1.0], 0.5, [-1.0]),
        ([1.0], 0.0, [1.0]),
        ([1.0, 2.0], 0.5, [1.0]),
    ])
    def test_non_positive_input(self, w, p, a):
        with pytest.raises(NonPositiveInput):
            subsample_weights(w, p, np.array(a))
