"""Phase-II nonresponse adjustment and subsample weights."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Union

import numpy as np

from ..bart import BartOptions, PosteriorChain, fit_bart_probit, predict
from ..dataset import ColumnKind, DesignFrame, Table
from ..errors import InvalidConfig, NonPositiveInput
from .chaid import ChaidOptions, ChaidTree, Discretizer, chaid_tree
from .lasso import LassoOptions, lasso_logistic_select
from .logistic import fit_logistic, logistic_predict

logger = logging.getLogger(__name__)


class AdjustmentMethod(str, Enum):
    LGM = "LGM"
    CHAID = "CHAID"
    BART = "BART"
    RBART = "rBART"

    @classmethod
    def parse(cls, value: Union[str, "AdjustmentMethod"]) -> "AdjustmentMethod":
        if isinstance(value, cls):
            return value
        for method in cls:
            if method.value.lower() == str(value).lower():
                return method
        raise InvalidConfig(f"unknown adjustment method {value!r}")


@dataclass(kw_only=True, frozen=True)
class AdjustmentOptions:
    lasso: LassoOptions = LassoOptions()
    chaid: ChaidOptions = ChaidOptions()
    bart: BartOptions = BartOptions()
    screen_above: int = 5
    min_propensity: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.min_propensity <= 1.0:
            raise InvalidConfig(f"min_propensity must lie in (0, 1], got {self.min_propensity}")


def numeric_matrix(table: Table, names: Optional[list[str]] = None) -> tuple[np.ndarray, list[str]]:
    """Float design columns; categorical columns become indicators for every level but the first.

    Returns the matrix and, per column, the source column name.
    """
    columns, sources = [], []
    for name in names if names is not None else table.names:
        if table.kind(name) is ColumnKind.CATEGORICAL:
            values = table.column(name)
            for level in table.levels[name][1:]:
                columns.append((values == level).astype(float))
                sources.append(name)
        else:
            columns.append(table.column(name))
            sources.append(name)
    if not columns:
        return np.empty((table.n, 0)), []
    return np.column_stack(columns), sources


def design_features(covariates: Table, design: DesignFrame, *, include_cluster: bool = True) -> Table:
    """Covariates plus stratum, optionally cluster, and the log phase-I weight."""
    features = covariates.with_column("stratum", ColumnKind.CATEGORICAL, design.stratum_id)
    if include_cluster:
        features = features.with_column("cluster", ColumnKind.CATEGORICAL, design.cluster_id)
    return features.with_column("log_w", ColumnKind.CONTINUOUS, np.log(design.weight))


def screen_covariates(covariates: Table, r: np.ndarray, opts: AdjustmentOptions,
                      rng: np.random.Generator) -> list[str]:
    """Source columns kept by the Lasso when there are more than ``screen_above`` covariates."""
    if len(covariates.names) <= opts.screen_above:
        return list(covariates.names)
    X, sources = numeric_matrix(covariates)
    picked = lasso_logistic_select(X, r, opts.lasso.n_folds, rng, opts.lasso)
    kept = [name for name in covariates.names if any(sources[j] == name for j in picked)]
    logger.info("Lasso screening kept %d of %d covariates: %s", len(kept), len(covariates.names), kept)
    return kept


class PropensityModel:
    def predict(self, covariates: Table, design: DesignFrame) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class LogisticModel(PropensityModel):
    names: tuple[str, ...]
    coef: np.ndarray

    def predict(self, covariates: Table, design: DesignFrame) -> np.ndarray:
        X, _ = numeric_matrix(covariates, list(self.names))
        return logistic_predict(self.coef, X)


@dataclass(frozen=True)
class CellModel(PropensityModel):
    names: tuple[str, ...]
    discretizer: Discretizer
    tree: ChaidTree

    def predict(self, covariates: Table, design: DesignFrame) -> np.ndarray:
        if not self.names:
            return np.full(covariates.n, self.tree.partition.response_rates[0])
        cells = self.tree.assign(self.discretizer.transform(covariates.select(self.names)))
        return self.tree.partition.response_rates[cells]


@dataclass(frozen=True)
class BartPropensityModel(PropensityModel):
    chain: PosteriorChain
    random_intercept: bool

    def predict(self, covariates: Table, design: DesignFrame) -> np.ndarray:
        features = design_features(covariates, design, include_cluster=not self.random_intercept)
        groups = design.cluster_id if self.random_intercept else None
        return predict(self.chain, features, groups=groups)


@dataclass(frozen=True)
class AdjustmentResult:
    """Fitted propensities for the phase-II-selected units and the adjustments a = 1/clip(p)."""
    method: AdjustmentMethod
    fitted_propensity: np.ndarray
    respondent: np.ndarray
    min_propensity: float
    model: PropensityModel = field(repr=False)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def adjustment(self) -> np.ndarray:
        return 1.0 / np.clip(self.fitted_propensity, self.min_propensity, 1.0)

    @property
    def respondent_adjustment(self) -> np.ndarray:
        return self.adjustment[self.respondent == 1]

    def predict_adjustment(self, covariates: Table, design: DesignFrame) -> np.ndarray:
        """Adjustment implied by the fitted model for arbitrary units (e.g. the whole phase-I sample)."""
        propensity = self.model.predict(covariates, design)
        return 1.0 / np.clip(propensity, self.min_propensity, 1.0)

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {"unit": i + 1, "respondent": int(resp), "propensity": float(p), "adjustment": float(a)}
            for i, (resp, p, a) in enumerate(zip(self.respondent, self.fitted_propensity, self.adjustment))
        ]


def nonresponse_adjustment(method: Union[str, AdjustmentMethod], covariates: Table, design: DesignFrame,
                           opts: AdjustmentOptions = AdjustmentOptions(),
                           rng: Optional[np.random.Generator] = None) -> AdjustmentResult:
    """Fit a response-propensity model on the phase-II-selected units.

    ``covariates`` and ``design`` hold exactly the selected units; the
    response indicator is ``design.phase2_respondent``.
    """
    method = AdjustmentMethod.parse(method)
    rng = rng if rng is not None else np.random.default_rng()
    r = design.phase2_respondent.astype(float)
    metadata: dict[str, Any] = {}

    if r.min() == 1.0:
        model: PropensityModel = _ConstantModel()
        propensity = np.ones(len(r))
    elif method is AdjustmentMethod.LGM:
        names = screen_covariates(covariates, r, opts, rng)
        X, _ = numeric_matrix(covariates, names)
        coef = fit_logistic(X, r)
        model = LogisticModel(tuple(names), coef)
        propensity = logistic_predict(coef, X)
        metadata["covariates"] = names
    elif method is AdjustmentMethod.CHAID:
        names = screen_covariates(covariates, r, opts, rng)
        if names:
            selected = covariates.select(names)
            discretizer = Discretizer.fit(selected, opts.chaid.n_bins)
            tree = chaid_tree(discretizer.transform(selected), r, discretizer.ordinal, opts.chaid)
        else:
            discretizer = None
            tree = chaid_tree(np.zeros((len(r), 1)), r, (False,), opts.chaid)
        model = CellModel(tuple(names), discretizer, tree)
        propensity = tree.partition.unit_propensity()
        metadata.update(covariates=names, cells=tree.partition.n_cells)
    else:
        random_intercept = method is AdjustmentMethod.RBART
        features = design_features(covariates, design, include_cluster=not random_intercept)
        groups = design.cluster_id if random_intercept else None
        chain = fit_bart_probit(features, r, opts.bart, rng, groups=groups)
        model = BartPropensityModel(chain, random_intercept)
        propensity = predict(chain, features, groups=groups)

    clipped = int(np.sum(propensity < opts.min_propensity))
    if clipped:
        logger.warning("%s: %d propensities below %.3g were clipped", method.value, clipped, opts.min_propensity)
    metadata["clipped"] = clipped
    return AdjustmentResult(
        method=method,
        fitted_propensity=np.asarray(propensity, dtype=float),
        respondent=design.phase2_respondent.copy(),
        min_propensity=opts.min_propensity,
        model=model,
        metadata=metadata,
    )


class _ConstantModel(PropensityModel):
    def predict(self, covariates: Table, design: DesignFrame) -> np.ndarray:
        return np.ones(covariates.n)


def subsample_weights(w_c, phase2_selection_prob: float, adj: Union[AdjustmentResult, np.ndarray]) -> np.ndarray:
    """w_s = w_c / p * a for the phase-II respondents."""
    a = adj.respondent_adjustment if isinstance(adj, AdjustmentResult) else np.asarray(adj, dtype=float)
    w_c = np.asarray(w_c, dtype=float)
    if len(w_c) != len(a):
        raise NonPositiveInput(f"{len(w_c)} weights for {len(a)} adjustments")
    if not 0.0 < phase2_selection_prob <= 1.0:
        raise NonPositiveInput(f"phase-II selection probability must lie in (0, 1], got {phase2_selection_prob}")
    if np.any(w_c <= 0) or np.any(a <= 0):
        raise NonPositiveInput("weights and adjustments must be positive")
    return w_c / phase2_selection_prob * a
