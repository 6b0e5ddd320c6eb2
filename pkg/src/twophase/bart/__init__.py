"""Sum-of-trees models: continuous BART, probit BART and random-intercept BART."""
from .chain import POSTERIOR_MEAN, ModelKind, PosteriorChain, TreeEnsembleDraw, chain_diagnostics, predict
from .data import CovariateMatrix, as_covariates
from .sampler import BartOptions, fit_bart, fit_bart_probit, fit_rbart, sample_tree_prior
from .tree import TreeNode, tree_depth

__all__ = [
    "POSTERIOR_MEAN",
    "BartOptions",
    "CovariateMatrix",
    "ModelKind",
    "PosteriorChain",
    "TreeEnsembleDraw",
    "TreeNode",
    "as_covariates",
    "chain_diagnostics",
    "fit_bart",
    "fit_bart_probit",
    "fit_rbart",
    "predict",
    "sample_tree_prior",
    "tree_depth",
]
