"""Sequential ensemble conformal prediction intervals for time series."""

from .core import (
    Dataset,
    PredictionInterval,
    ResidualWindow,
    empirical_p_value,
    empirical_quantile,
    weighted_quantile,
)
from .datagen import SimConfig, generate
from .ensemble import EnsembleState, SequentialRun, fit_ensemble, run_sequential
from .regressors import FittedModel, RegressorSpec, fit, predict

__all__ = [
    "Dataset",
    "EnsembleState",
    "FittedModel",
    "PredictionInterval",
    "RegressorSpec",
    "ResidualWindow",
    "SequentialRun",
    "SimConfig",
    "empirical_p_value",
    "empirical_quantile",
    "fit",
    "fit_ensemble",
    "generate",
    "predict",
    "run_sequential",
    "weighted_quantile",
]
