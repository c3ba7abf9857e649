"""Numerical building blocks: spectral basis, potentials, noise and file formats."""

from .noise import WienerIncrements, trace_bound_report
from .spectral import SpectralBasis

__all__ = [
    "SpectralBasis",
    "WienerIncrements",
    "trace_bound_report",
]
