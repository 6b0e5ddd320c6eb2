"""Survey inference for two-phase designs: subsample weighting and tree-based multiple imputation."""

__version__ = "0.1.0"
