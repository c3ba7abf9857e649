"""Spectral simulator and verification lab for singular density-fluctuation SPDEs."""

__version__ = "0.1.0"
