"""Design-based weighted means and Taylor-linearisation variances for stratified cluster samples."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import t as student_t

from .errors import EmptyInput, InvalidLevel, NonPositiveDf, NonPositiveWeight, SingletonStratumCluster

logger = logging.getLogger(__name__)


@dataclass(kw_only=True, frozen=True)
class PointEstimate:
    estimate: float
    variance: float
    df: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise EmptyInput(f"variance must be non-negative, got {self.variance}")
        if not self.df > 0:
            raise NonPositiveDf(self.df)

    @property
    def std_error(self) -> float:
        return float(np.sqrt(self.variance))


def _check(y, w) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(y) == 0:
        raise EmptyInput("no units to estimate from")
    if len(y) != len(w):
        raise EmptyInput(f"{len(y)} values for {len(w)} weights")
    bad = np.flatnonzero(~(w > 0))
    if len(bad):
        raise NonPositiveWeight(int(bad[0]) + 1, float(w[bad[0]]))
    if not np.all(np.isfinite(y)):
        raise EmptyInput("outcome has missing or non-finite values")
    return y, w


def weighted_mean(y, w) -> float:
    y, w = _check(y, w)
    return float(np.sum(w * y) / np.sum(w))


def collapse_strata(stratum_id, cluster_id) -> np.ndarray:
    """Stratum labels with every single-cluster stratum merged into its neighbour.

    Strata are taken in sorted order; a singleton joins the next stratum, or
    the previous one when it is last.
    """
    stratum_id = np.asarray(stratum_id)
    cluster_id = np.asarray(cluster_id)
    labels = stratum_id.copy()
    while True:
        strata = np.unique(labels)
        counts = np.array([len(np.unique(cluster_id[labels == h])) for h in strata])
        singles = np.flatnonzero(counts == 1)
        if len(singles) == 0 or len(strata) == 1:
            return labels
        k = singles[0]
        neighbour = strata[k + 1] if k + 1 < len(strata) else strata[k - 1]
        logger.debug("collapsing singleton stratum %s into %s", strata[k], neighbour)
        labels = np.where(labels == strata[k], neighbour, labels)


def _cluster_totals(u: np.ndarray, stratum_id: np.ndarray, cluster_id: np.ndarray,
                    collapse_singletons: bool) -> list[np.ndarray]:
    if collapse_singletons:
        stratum_id = collapse_strata(stratum_id, cluster_id)
    totals = []
    for h in np.unique(stratum_id):
        in_h = stratum_id == h
        _, index = np.unique(cluster_id[in_h], return_inverse=True)
        cluster_sums = np.bincount(index, weights=u[in_h])
        if len(cluster_sums) < 2:
            raise SingletonStratumCluster(int(h))
        totals.append(cluster_sums)
    return totals


def taylor_variance(y, w, stratum_id, cluster_id, collapse_singletons: bool = False) -> float:
    """With-replacement first-stage linearisation variance of the weighted mean.

    u_i = w_i (y_i - mean) / sum(w); U_hj are cluster totals of u and the
    variance is sum_h n_h / (n_h - 1) * sum_j (U_hj - mean_j U_hj)^2.
    """
    y, w = _check(y, w)
    stratum_id = np.asarray(stratum_id)
    cluster_id = np.asarray(cluster_id)
    if not len(stratum_id) == len(cluster_id) == len(y):
        raise EmptyInput("design labels and values differ in length")
    u = w * (y - np.sum(w * y) / np.sum(w)) / np.sum(w)
    variance = 0.0
    for totals in _cluster_totals(u, stratum_id, cluster_id, collapse_singletons):
        n_h = len(totals)
        variance += n_h / (n_h - 1) * np.sum((totals - totals.mean()) ** 2)
    return float(variance)


def design_df(stratum_id, cluster_id, collapse_singletons: bool = False) -> float:
    """Number of sampled clusters minus number of strata."""
    stratum_id = np.asarray(stratum_id)
    cluster_id = np.asarray(cluster_id)
    if collapse_singletons:
        stratum_id = collapse_strata(stratum_id, cluster_id)
    n_clusters = len(np.unique(np.column_stack([stratum_id, cluster_id]), axis=0)) if len(cluster_id) else 0
    df = n_clusters - len(np.unique(stratum_id))
    if df <= 0:
        raise NonPositiveDf(df)
    return float(df)


def ci_from(est: PointEstimate, level: float = 0.95) -> tuple[float, float]:
    if not 0.0 < level < 1.0:
        raise InvalidLevel(level)
    if est.variance == 0.0:
        return est.estimate, est.estimate
    half = student_t.ppf(0.5 * (1.0 + level), est.df) * np.sqrt(est.variance)
    return float(est.estimate - half), float(est.estimate + half)


def estimate_mean(y, w, stratum_id, cluster_id, collapse_singletons: bool = False) -> PointEstimate:
    return PointEstimate(
        estimate=weighted_mean(y, w),
        variance=taylor_variance(y, w, stratum_id, cluster_id, collapse_singletons),
        df=design_df(stratum_id, cluster_id, collapse_singletons),
    )


def bootstrap_variance(y, w, stratum_id, cluster_id, n_boot: int = 20_000,
                       rng: Optional[np.random.Generator] = None) -> float:
    """Rescaled cluster bootstrap: n_h - 1 clusters drawn with replacement per stratum,
    weights scaled by n_h / (n_h - 1)."""
    y, w = _check(y, w)
    rng = rng if rng is not None else np.random.default_rng()
    stratum_id = np.asarray(stratum_id)
    cluster_id = np.asarray(cluster_id)
    numerator = np.zeros(n_boot)
    denominator = np.zeros(n_boot)
    for h in np.unique(stratum_id):
        in_h = stratum_id == h
        _, index = np.unique(cluster_id[in_h], return_inverse=True)
        weighted_y = np.bincount(index, weights=(w * y)[in_h])
        weight = np.bincount(index, weights=w[in_h])
        n_h = len(weight)
        if n_h < 2:
            raise SingletonStratumCluster(int(h))
        counts = rng.multinomial(n_h - 1, np.full(n_h, 1.0 / n_h), size=n_boot) * (n_h / (n_h - 1))
        numerator += counts @ weighted_y
        denominator += counts @ weight
    return float(np.var(numerator / denominator, ddof=1))
