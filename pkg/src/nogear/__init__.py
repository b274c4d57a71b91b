"""Coherent forecasting for the NoGeAR(1) count time-series model."""
from ._accel import BACKEND
from .errors import (
    AiccUndefined,
    ConstraintViolation,
    DegenerateSeries,
    LengthMismatch,
    NonConvergenceWarning,
    OriginOutOfRange,
    TruncationTooSevere,
)
from .model import CountSeries, ModelParams, RngSpec, simulate, validate_params

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AiccUndefined",
    "ConstraintViolation",
    "DegenerateSeries",
    "LengthMismatch",
    "NonConvergenceWarning",
    "OriginOutOfRange",
    "TruncationTooSevere",
    "CountSeries",
    "ModelParams",
    "RngSpec",
    "simulate",
    "validate_params",
    "__version__",
]
