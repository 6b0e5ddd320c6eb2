"""Phase-II response propensity models and nonresponse adjustment."""
from .logistic import fit_logistic, logistic_predict

__all__ = ["fit_logistic", "logistic_predict"]
