"""L1-penalised logistic regression for covariate screening.

The objective is ``-loglik / n + lambda * sum |beta_j|`` on standardised
columns with an unpenalised intercept. Each outer step forms the IRLS
quadratic approximation; coordinate descent with soft thresholding solves
it. Paths are warm-started from the largest lambda down.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from sklearn.model_selection import StratifiedKFold

from ..errors import InvalidConfig, Separation

logger = logging.getLogger(__name__)

PROBABILITY_CLIP = 1e-5


@dataclass(kw_only=True, frozen=True)
class LassoOptions:
    n_folds: int = 10
    n_lambdas: int = 50
    lambda_min_ratio: Optional[float] = None  # 1e-4 if n > p else 1e-2
    max_irls: int = 25
    max_sweeps: int = 500
    tol: float = 1e-7
    nonzero_tol: float = 1e-6

    def __post_init__(self):
        if self.n_folds < 2:
            raise InvalidConfig(f"n_folds must be >= 2, got {self.n_folds}")
        if self.n_lambdas < 1:
            raise InvalidConfig("n_lambdas must be >= 1")
        if self.lambda_min_ratio is not None and not 0.0 < self.lambda_min_ratio < 1.0:
            raise InvalidConfig(f"lambda_min_ratio must lie in (0, 1), got {self.lambda_min_ratio}")


@dataclass(frozen=True)
class LassoPath:
    """Coefficients along a lambda grid, on the standardised column scale."""
    lambdas: np.ndarray
    intercepts: np.ndarray
    coefs: np.ndarray  # (n_lambdas, p)
    center: np.ndarray
    scale: np.ndarray

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.center) / self.scale
        return self.intercepts[:, None] + self.coefs @ Xs.T

    def selected(self, index: int, nonzero_tol: float = 1e-6) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(np.abs(self.coefs[index]) > nonzero_tol))


def _soft_threshold(value: float, threshold: float) -> float:
    return np.sign(value) * max(abs(value) - threshold, 0.0)


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return (X - center) / scale, center, scale


def lambda_max(X: np.ndarray, r: np.ndarray) -> float:
    """Smallest lambda at which every penalised coefficient is zero."""
    Xs, _, _ = _standardize(np.asarray(X, dtype=float))
    r = np.asarray(r, dtype=float)
    return float(np.max(np.abs(Xs.T @ (r - r.mean()))) / len(r)) if Xs.shape[1] else 0.0


def lambda_grid(X: np.ndarray, r: np.ndarray, opts: LassoOptions) -> np.ndarray:
    n, p = np.shape(X)
    ratio = opts.lambda_min_ratio or (1e-4 if n > p else 1e-2)
    top = lambda_max(X, r) * (1.0 + 1e-9)
    if opts.n_lambdas == 1:
        return np.array([top])
    return np.geomspace(top, top * ratio, opts.n_lambdas)


def _solve(Xs: np.ndarray, r: np.ndarray, lam: float, b0: float, beta: np.ndarray,
           opts: LassoOptions) -> tuple[float, np.ndarray]:
    n = len(r)
    beta = beta.copy()
    for _ in range(opts.max_irls):
        eta = b0 + Xs @ beta
        prob = np.clip(expit(eta), PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
        w = prob * (1.0 - prob)
        resid = (r - prob) / w
        b0_old, beta_old = b0, beta.copy()
        for _ in range(opts.max_sweeps):
            shift = (w @ resid) / w.sum()
            b0 += shift
            resid -= shift
            largest = shift * shift
            for j in range(Xs.shape[1]):
                xj = Xs[:, j]
                wx = w * xj
                curvature = wx @ xj / n
                if curvature <= 0.0:
                    continue
                old = beta[j]
                new = _soft_threshold(wx @ resid / n + curvature * old, lam) / curvature
                if new != old:
                    resid -= xj * (new - old)
                    beta[j] = new
                    largest = max(largest, curvature * (new - old) ** 2)
            if largest < opts.tol:
                break
        change = max(abs(b0 - b0_old), float(np.max(np.abs(beta - beta_old), initial=0.0)))
        if change < np.sqrt(opts.tol):
            break
    return b0, beta


def lasso_path(X, r, lambdas: Optional[Sequence[float]] = None, opts: LassoOptions = LassoOptions()) -> LassoPath:
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    if r.min() == r.max():
        raise Separation()
    if lambdas is None:
        lambdas = lambda_grid(X, r, opts)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    Xs, center, scale = _standardize(X)
    mean = np.clip(r.mean(), PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
    b0, beta = float(np.log(mean / (1.0 - mean))), np.zeros(X.shape[1])
    intercepts, coefs = np.empty(len(lambdas)), np.empty((len(lambdas), X.shape[1]))
    for i, lam in enumerate(lambdas):
        b0, beta = _solve(Xs, r, lam, b0, beta, opts)
        intercepts[i], coefs[i] = b0, beta
    return LassoPath(lambdas, intercepts, coefs, center, scale)


def binomial_deviance(r: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Mean deviance of r for each row of linear predictors ``eta``."""
    prob = np.clip(expit(eta), 1e-10, 1.0 - 1e-10)
    return -2.0 * np.mean(r * np.log(prob) + (1.0 - r) * np.log1p(-prob), axis=-1)


def cv_deviance(X, r, rng: np.random.Generator, opts: LassoOptions = LassoOptions()) -> tuple[np.ndarray, np.ndarray]:
    """Mean held-out deviance over stratified folds for every lambda of the full-data grid."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    if r.min() == r.max():
        raise Separation()
    lambdas = lambda_grid(X, r, opts)
    smallest_class = int(min(r.sum(), len(r) - r.sum()))
    n_folds = min(opts.n_folds, smallest_class)
    if n_folds < 2:
        raise Separation()
    folds = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=int(rng.integers(2**31 - 1)))
    deviance = np.zeros(len(lambdas))
    for train, test in folds.split(X, r):
        path = lasso_path(X[train], r[train], lambdas, opts)
        deviance += binomial_deviance(r[test], path.linear_predictor(X[test]))
    return lambdas, deviance / n_folds


def lasso_logistic_select(X, r, n_folds: int = 10, rng: Optional[np.random.Generator] = None,
                          opts: Optional[LassoOptions] = None) -> tuple[int, ...]:
    """Columns with nonzero coefficients at the lambda minimising mean CV deviance."""
    if opts is None:
        opts = LassoOptions(n_folds=n_folds)
    rng = rng if rng is not None else np.random.default_rng()
    lambdas, deviance = cv_deviance(X, r, rng, opts)
    best = int(np.argmin(deviance))
    path = lasso_path(X, r, lambdas, opts)
    selected = path.selected(best, opts.nonzero_tol)
    logger.debug("lasso: lambda=%.4g (index %d of %d), cv deviance %.4f, %d of %d columns kept",
                 lambdas[best], best, len(lambdas), deviance[best], len(selected), np.shape(X)[1])
    return selected
