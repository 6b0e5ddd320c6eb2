"""Maximum-likelihood logistic regression for response propensities."""
import logging
import warnings

import numpy as np
import statsmodels.api as sm
from scipy.special import expit
from statsmodels.tools.sm_exceptions import PerfectSeparationWarning

try:
    from statsmodels.tools.sm_exceptions import PerfectSeparationError
except ImportError:  # removed in newer statsmodels
    PerfectSeparationError = PerfectSeparationWarning

from ..errors import Separation, SingularDesign

logger = logging.getLogger(__name__)

MAX_ABS_COEFFICIENT = 30.0


def _design(X: np.ndarray, add_intercept: bool) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if add_intercept:
        X = np.column_stack([np.ones(len(X)), X])
    return X


def fit_logistic(X: np.ndarray, r: np.ndarray, *, add_intercept: bool = True,
                 max_iter: int = 50, tol: float = 1e-8) -> np.ndarray:
    """Logit coefficients by IRLS; the intercept (if added) comes first.

    Raises Separation when the fit diverges (any |coefficient| > 30, or a
    single response class) and SingularDesign for rank-deficient designs.
    """
    design = _design(X, add_intercept)
    r = np.asarray(r, dtype=float)
    if r.min() == r.max():
        raise Separation()
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesign(f"design matrix of shape {design.shape} is rank deficient")

    with warnings.catch_warnings():
        warnings.simplefilter("error", PerfectSeparationWarning)
        try:
            result = sm.GLM(r, design, family=sm.families.Binomial()).fit(
                method="IRLS", maxiter=max_iter, tol=tol * 1e-4)
        except (PerfectSeparationError, PerfectSeparationWarning):
            raise Separation() from None
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(str(exc)) from exc

    coef = np.asarray(result.params, dtype=float)
    if not np.all(np.isfinite(coef)) or np.max(np.abs(coef)) > MAX_ABS_COEFFICIENT:
        raise Separation(coef)
    score = np.max(np.abs(design.T @ (r - expit(design @ coef))))
    logger.debug("logistic fit: %d iterations, max |score| = %.3g", result.fit_history["iteration"], score)
    return coef


def logistic_predict(coef: np.ndarray, X: np.ndarray, *, add_intercept: bool = True) -> np.ndarray:
    return expit(_design(X, add_intercept) @ np.asarray(coef, dtype=float))
