"""Shared constants, errors and value types."""

from .errors import (
    BlowUpError,
    BoundaryCollapseError,
    ConfigurationError,
    DomainError,
    PositivityViolationError,
    PreconditionError,
    ReptonError,
    UsageError,
)
from .types import (
    BoundaryState,
    DensityField,
    EdgeFlux,
    EnsembleResult,
    ReflectionLedger,
    SineField,
    Trajectory,
)

__all__ = [
    "BlowUpError",
    "BoundaryCollapseError",
    "BoundaryState",
    "ConfigurationError",
    "DensityField",
    "DomainError",
    "EdgeFlux",
    "EnsembleResult",
    "PositivityViolationError",
    "PreconditionError",
    "ReflectionLedger",
    "ReptonError",
    "SineField",
    "Trajectory",
    "UsageError",
]
