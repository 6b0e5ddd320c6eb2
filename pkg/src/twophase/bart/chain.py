"""Retained posterior states and prediction from them."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from ..errors import IndexOutOfRange
from .data import CovariateMatrix, as_covariates
from .tree import TreeNode, evaluate, leaves

logger = logging.getLogger(__name__)

POSTERIOR_MEAN = "posterior_mean"


class ModelKind(str, Enum):
    CONTINUOUS = "continuous"
    PROBIT = "probit"
    CONTINUOUS_RANDOM_INTERCEPT = "continuous_random_intercept"
    PROBIT_RANDOM_INTERCEPT = "probit_random_intercept"

    @property
    def is_probit(self) -> bool:
        return self in (ModelKind.PROBIT, ModelKind.PROBIT_RANDOM_INTERCEPT)

    @property
    def has_random_intercept(self) -> bool:
        return self in (ModelKind.CONTINUOUS_RANDOM_INTERCEPT, ModelKind.PROBIT_RANDOM_INTERCEPT)


@dataclass(frozen=True)
class TreeEnsembleDraw:
    """One retained state. ``scaling`` maps the internal [-0.5, 0.5] range back to the
    outcome scale; sigma, intercepts and tau2 are already on the outcome scale."""
    trees: tuple[TreeNode, ...]
    sigma: float
    scaling: tuple[float, float]
    random_intercepts: Optional[dict] = None
    tau2: Optional[float] = None

    @property
    def center(self) -> float:
        return 0.5 * (self.scaling[0] + self.scaling[1])

    @property
    def span(self) -> float:
        return self.scaling[1] - self.scaling[0]

    def raw(self, X: np.ndarray) -> np.ndarray:
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += evaluate(tree, X)
        return total

    def intercepts_for(self, groups: Optional[Sequence]) -> np.ndarray:
        if self.random_intercepts is None or groups is None:
            return 0.0
        return np.array([self.random_intercepts.get(g, 0.0) for g in groups])

    def linear_predictor(self, X: np.ndarray, groups: Optional[Sequence] = None) -> np.ndarray:
        return self.center + self.span * self.raw(X) + self.intercepts_for(groups)

    def n_leaves(self) -> int:
        return sum(len(leaves(tree)) for tree in self.trees)


@dataclass(frozen=True)
class PosteriorChain:
    draws: tuple[TreeEnsembleDraw, ...]
    model_kind: ModelKind
    covariates: CovariateMatrix

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def n_keep(self) -> int:
        return len(self.draws)


def _draw_prediction(chain: PosteriorChain, draw: TreeEnsembleDraw, X: np.ndarray,
                     groups: Optional[Sequence]) -> np.ndarray:
    eta = draw.linear_predictor(X, groups if chain.model_kind.has_random_intercept else None)
    return norm.cdf(eta) if chain.model_kind.is_probit else eta


def predict(chain: PosteriorChain, X_new, draw_index: Union[int, str] = POSTERIOR_MEAN,
            groups: Optional[Sequence] = None) -> np.ndarray:
    """Per-draw prediction, or the average over draws for ``posterior_mean``.

    Random-intercept chains add the draw's intercept for each unit's group
    (0 for groups unseen in training); probit chains return probabilities.
    """
    X = as_covariates(X_new, chain.covariates).values
    if isinstance(draw_index, str):
        if draw_index != POSTERIOR_MEAN:
            raise IndexOutOfRange(f"unknown draw selector {draw_index!r}")
        total = np.zeros(X.shape[0])
        for draw in chain.draws:
            total += _draw_prediction(chain, draw, X, groups)
        return total / len(chain.draws)
    if not 0 <= draw_index < len(chain.draws):
        raise IndexOutOfRange(f"draw {draw_index} outside 0..{len(chain.draws) - 1}")
    return _draw_prediction(chain, chain.draws[draw_index], X, groups)


def chain_diagnostics(chain: PosteriorChain) -> list[dict]:
    """Per-draw sigma, total leaf count and tau2 for convergence checks."""
    records = []
    for index, draw in enumerate(chain.draws):
        records.append({
            "draw": index,
            "sigma": float(draw.sigma),
            "leaves": draw.n_leaves(),
            "tau2": float(draw.tau2) if draw.tau2 is not None else float("nan"),
        })
    return records
