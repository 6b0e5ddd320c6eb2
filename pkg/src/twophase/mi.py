"""Multiple imputation of the phase-I outcome from posterior draws, and Rubin's combining rules."""
import logging
import warnings
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .bart import PosteriorChain, as_covariates
from .dataset import ColumnKind, DesignFrame, Table
from .errors import ChainTooShort, ColumnMismatch, CovariateMismatch, DegenerateBetween, EmptyInput
from .estimators import PointEstimate, ci_from, estimate_mean
from .propensity.adjustment import design_features

logger = logging.getLogger(__name__)

DF_CAP = 1e6


@dataclass(frozen=True)
class CompletedDataset:
    """Phase-I outcome with the missing values filled from one posterior draw."""
    values: np.ndarray
    imputed: np.ndarray
    draw_index: int


@dataclass(kw_only=True, frozen=True)
class MIResult:
    estimates: np.ndarray
    variances: np.ndarray
    estimate: float
    within: float
    between: float
    total_variance: float
    df: float
    lower: float
    upper: float
    level: float = 0.95

    @property
    def n_imputations(self) -> int:
        return len(self.estimates)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_record(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
            "variance": self.total_variance,
            "df": self.df,
            "D": self.n_imputations,
        }


def imputation_covariates(covariates: Table, design: DesignFrame, adjustment: np.ndarray, *,
                          include_cluster: bool = True) -> Table:
    """Predictors of the imputation model: covariates, stratum, cluster, log w_c and log a."""
    features = design_features(covariates, design, include_cluster=include_cluster)
    return features.with_column("log_a", ColumnKind.CONTINUOUS, np.log(np.asarray(adjustment, dtype=float)))


def impute_datasets(chain: PosteriorChain, covariates: Table, outcome: np.ndarray, D: int,
                    rng: np.random.Generator, groups: Optional[Sequence] = None) -> list[CompletedDataset]:
    """D completed copies of ``outcome`` (NaN = missing), one per retained draw from the end of the chain.

    Continuous chains add the draw's group intercept (rBART) and fresh
    N(0, sigma^2) noise; probit chains draw Bernoulli(Phi(.)) values.
    """
    if D < 1 or D > chain.n_keep:
        raise ChainTooShort(D, chain.n_keep)
    try:
        X = as_covariates(covariates, chain.covariates).values
    except ColumnMismatch as exc:
        raise CovariateMismatch(str(exc)) from exc
    outcome = np.asarray(outcome, dtype=float)
    if len(outcome) != len(X):
        raise CovariateMismatch(f"{len(outcome)} outcomes for {len(X)} covariate rows")
    missing = np.isnan(outcome)
    rows = np.flatnonzero(missing)
    use_groups = None
    if chain.model_kind.has_random_intercept and groups is not None:
        use_groups = np.asarray(groups)[rows]

    completed = []
    for d in range(chain.n_keep - D, chain.n_keep):
        draw = chain.draws[d]
        values = outcome.copy()
        eta = draw.linear_predictor(X[rows], use_groups)
        if chain.model_kind.is_probit:
            values[rows] = (rng.random(len(rows)) < norm.cdf(eta)).astype(float)
        else:
            values[rows] = eta + draw.sigma * rng.standard_normal(len(rows))
        values.setflags(write=False)
        completed.append(CompletedDataset(values=values, imputed=missing, draw_index=d))
    logger.debug("imputed %d of %d values in %d datasets", len(rows), len(outcome), D)
    return completed


def rubin_combine(estimates: Sequence[float], variances: Sequence[float], D: Optional[int] = None,
                  level: float = 0.95) -> MIResult:
    estimates = np.asarray(estimates, dtype=float)
    variances = np.asarray(variances, dtype=float)
    D = len(estimates) if D is None else D
    if D < 2 or len(estimates) != D or len(variances) != D:
        raise EmptyInput(f"need D >= 2 estimates and variances, got {len(estimates)}/{len(variances)} for D={D}")
    if np.any(variances < 0):
        raise EmptyInput("within-imputation variances must be non-negative")

    estimate = float(np.mean(estimates))
    within = float(np.mean(variances))
    between = float(np.sum((estimates - estimate) ** 2) / (D - 1))
    total = within + (1.0 + 1.0 / D) * between
    if between == 0.0:
        warnings.warn(DegenerateBetween(f"all {D} imputations give {estimate}; df capped at {DF_CAP:g}"))
        df = DF_CAP
    else:
        df = min((D - 1) * (1.0 + D / (D + 1.0) * within / between) ** 2, DF_CAP)
    lower, upper = ci_from(PointEstimate(estimate=estimate, variance=total, df=df), level)
    return MIResult(
        estimates=estimates,
        variances=variances,
        estimate=estimate,
        within=within,
        between=between,
        total_variance=total,
        df=df,
        lower=lower,
        upper=upper,
        level=level,
    )


def mi_estimate_mean(completed: Sequence[CompletedDataset], design: DesignFrame, level: float = 0.95,
                     collapse_singletons: bool = False) -> MIResult:
    """Weighted mean and Taylor variance over the phase-I design for each dataset, then Rubin's rules."""
    per_dataset = [
        estimate_mean(c.values, design.weight, design.stratum_id, design.cluster_id, collapse_singletons)
        for c in completed
    ]
    return rubin_combine([e.estimate for e in per_dataset], [e.variance for e in per_dataset],
                         len(per_dataset), level)
