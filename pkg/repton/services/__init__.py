"""Services: integrator, analysis laboratory and experiment runner."""

from .experiment_service import ExperimentService, experiment_service
from .integrator import Stepper, step_boundaries
from .provenance_service import ProvenanceService, provenance_service

__all__ = [
    "ExperimentService",
    "experiment_service",
    "ProvenanceService",
    "provenance_service",
    "Stepper",
    "step_boundaries",
]
