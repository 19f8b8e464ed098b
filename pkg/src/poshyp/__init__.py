"""Simulation and spectral stability analysis of positive transport systems
on [0, 1] with boundary feedback and delayed boundary laws."""
from .core import (
    DelayMeasure,
    Field,
    HistoryBuffer,
    StabilityReport,
    SystemSpec,
    ValidationResult,
    Verdict,
    field_is_nonnegative,
    field_l2_norm,
    validate_system,
)
from .kernels import BACKEND

__all__ = [
    "BACKEND",
    "DelayMeasure",
    "Field",
    "HistoryBuffer",
    "StabilityReport",
    "SystemSpec",
    "ValidationResult",
    "Verdict",
    "field_is_nonnegative",
    "field_l2_norm",
    "validate_system",
]
__version__ = "0.1.0"
