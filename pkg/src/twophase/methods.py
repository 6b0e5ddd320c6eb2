"""Estimation arms for the simulation and the analyze command.

Each arm follows one convention: ``compute_estimate`` returns the estimate,
interval and metadata; ``evaluate`` wraps it into a MethodOutcome and turns
package errors into a failure record instead of raising.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .bart import BartOptions, fit_bart, fit_bart_probit, fit_rbart
from .dataset import DesignFrame, Table
from .errors import EmptyInput, TwoPhaseError
from .estimators import ci_from, estimate_mean
from .mi import impute_datasets, imputation_covariates, mi_estimate_mean
from .propensity.adjustment import (
    AdjustmentMethod,
    AdjustmentOptions,
    AdjustmentResult,
    nonresponse_adjustment,
    subsample_weights,
)
from .results import MethodOutcome
from .streams import stream

logger = logging.getLogger(__name__)


@dataclass
class AnalysisContext:
    """Phase-I data shared by every arm of one replicate (or one real-data analysis).

    ``outcome`` is NaN outside the phase-II respondents. Propensity fits are
    cached by method and seeded from their own stream, so an arm's numbers do
    not depend on which other arms run.
    """
    covariates: Table
    outcome: np.ndarray
    design: DesignFrame
    phase2_selection_prob: float
    seed: int
    replicate: int = 0
    imputations: int = 10
    level: float = 0.95
    collapse_singletons: bool = False
    binary_outcome: bool = False
    adjustment_options: AdjustmentOptions = AdjustmentOptions()
    imputation_options: BartOptions = BartOptions()
    benchmark_outcome: Optional[np.ndarray] = None
    _adjustments: dict = field(default_factory=dict, repr=False)

    @property
    def selected(self) -> np.ndarray:
        return self.design.phase2_selected == 1

    @property
    def respondents(self) -> np.ndarray:
        return self.design.phase2_respondent == 1

    def rng(self, *tags) -> np.random.Generator:
        return stream(self.seed, self.replicate, *tags)

    def adjustment(self, method: AdjustmentMethod) -> AdjustmentResult:
        if method not in self._adjustments:
            selected = self.selected
            self._adjustments[method] = nonresponse_adjustment(
                method,
                self.covariates.take(selected),
                self.design.take(selected),
                self.adjustment_options,
                self.rng("propensity", method.value),
            )
        return self._adjustments[method]


class Method:
    """Base class for estimation arms."""
    name: str = "base"

    @classmethod
    def evaluate(cls, ctx: AnalysisContext, **kwargs) -> MethodOutcome:
        try:
            estimate, lower, upper, metadata = cls.compute_estimate(ctx, **kwargs)
        except TwoPhaseError as e:
            logger.warning("%s failed in replicate %d: %s", cls.name, ctx.replicate, e)
            return MethodOutcome(name=cls.name, parameters=kwargs,
                                 metadata={"error": str(e), "error_type": type(e).__name__})
        return MethodOutcome(name=cls.name, estimate=estimate, lower=lower, upper=upper,
                             parameters=kwargs, metadata=metadata)

    @classmethod
    def compute_estimate(cls, ctx: AnalysisContext, **kwargs) -> tuple[float, float, float, dict[str, Any]]:
        """Compute the estimate for this arm. Override in subclasses."""
        raise NotImplementedError


METHODS: dict[str, type[Method]] = {}


def register(name: str) -> Callable[[type[Method]], type[Method]]:
    def decorator(cls: type[Method]) -> type[Method]:
        cls.name = name
        METHODS[name] = cls
        return cls
    return decorator


@register("benchmark")
class Benchmark(Method):
    """Weighted mean of the full phase-I outcome."""

    @classmethod
    def compute_estimate(cls, ctx: AnalysisContext, **kwargs):
        if ctx.benchmark_outcome is None:
            raise EmptyInput("the benchmark needs the complete phase-I outcome")
        d = ctx.design
        est = estimate_mean(ctx.benchmark_outcome, d.weight, d.stratum_id, d.cluster_id, ctx.collapse_singletons)
        lower, upper = ci_from(est, ctx.level)
        return est.estimate, lower, upper, {"variance": est.variance, "df": est.df}


class Weighting(Method):
    """Weighted mean of the phase-II respondents under subsample weights."""
    propensity: AdjustmentMethod

    @classmethod
    def compute_estimate(cls, ctx: AnalysisContext, **kwargs):
        adj = ctx.adjustment(cls.propensity)
        resp = ctx.respondents
        d = ctx.design
        w_s = subsample_weights(d.weight[resp], ctx.phase2_selection_prob, adj)
        est = estimate_mean(ctx.outcome[resp], w_s, d.stratum_id[resp], d.cluster_id[resp], ctx.collapse_singletons)
        lower, upper = ci_from(est, ctx.level)
        metadata = {"variance": est.variance, "df": est.df, "max_adjustment": float(adj.adjustment.max())}
        metadata.update(adj.metadata)
        return est.estimate, lower, upper, metadata


@register("wt-lgm")
class WeightingLogistic(Weighting):
    propensity = AdjustmentMethod.LGM


@register("wt-chaid")
class WeightingChaid(Weighting):
    propensity = AdjustmentMethod.CHAID


@register("wt-bart")
class WeightingBart(Weighting):
    propensity = AdjustmentMethod.BART


@register("wt-rbart")
class WeightingRbart(Weighting):
    propensity = AdjustmentMethod.RBART


class Imputation(Method):
    """Multiple imputation of the phase-I outcome from a tree model fitted on the respondents."""
    propensity: AdjustmentMethod
    random_intercept: bool

    @classmethod
    def compute_estimate(cls, ctx: AnalysisContext, **kwargs):
        d = ctx.design
        adj = ctx.adjustment(cls.propensity)
        a = adj.predict_adjustment(ctx.covariates, d)
        features = imputation_covariates(ctx.covariates, d, a, include_cluster=not cls.random_intercept)
        resp = ctx.respondents
        train, y = features.take(resp), ctx.outcome[resp]
        groups = d.cluster_id[resp] if cls.random_intercept else None
        rng = ctx.rng("imputation", cls.name)
        if ctx.binary_outcome:
            chain = fit_bart_probit(train, y, ctx.imputation_options, rng, groups=groups)
        elif cls.random_intercept:
            chain = fit_rbart(train, y, groups, ctx.imputation_options, rng)
        else:
            chain = fit_bart(train, y, ctx.imputation_options, rng)
        outcome = np.where(resp, ctx.outcome, np.nan)
        completed = impute_datasets(chain, features, outcome, ctx.imputations, rng,
                                    groups=d.cluster_id if cls.random_intercept else None)
        result = mi_estimate_mean(completed, d, ctx.level, ctx.collapse_singletons)
        return result.estimate, result.lower, result.upper, {
            "variance": result.total_variance,
            "df": result.df,
            "within": result.within,
            "between": result.between,
            "D": result.n_imputations,
        }


@register("mi-bart")
class ImputationBart(Imputation):
    propensity = AdjustmentMethod.BART
    random_intercept = False


@register("mi-rbart")
class ImputationRbart(Imputation):
    propensity = AdjustmentMethod.RBART
    random_intercept = True


def run_methods(ctx: AnalysisContext, names: list[str]) -> list[MethodOutcome]:
    outcomes = []
    for name in names:
        outcome = METHODS[name].evaluate(ctx)
        if outcome.ok:
            logger.info("%s: estimate %.4f [%.4f, %.4f]", name, outcome.estimate, outcome.lower, outcome.upper)
        outcomes.append(outcome)
    return outcomes


def failed_outcomes(names: list[str], error: Exception) -> list[MethodOutcome]:
    return [MethodOutcome(name=n, estimate=math.nan, metadata={"error": str(error), "error_type": type(error).__name__})
            for n in names]
