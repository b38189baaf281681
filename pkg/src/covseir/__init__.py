"""Covariate-driven extended SEIR forecasting.

Ten-compartment daily difference equations, sigmoid-bounded generalized
additive rate encoders over lagged covariates, end-to-end training on
partially observed panels with a handwritten scalar autodiff tape, point and
quantile forecasts, and subgroup fairness reporting.
"""

from .errors import (
    ConfigError,
    CovseirError,
    DataError,
    DomainError,
    EmptyMetricError,
    NumericalError,
    TapeError,
    TrainingDivergedError,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigError",
    "CovseirError",
    "DataError",
    "DomainError",
    "EmptyMetricError",
    "NumericalError",
    "TapeError",
    "TrainingDivergedError",
]
