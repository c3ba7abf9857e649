"""Value types shared across the simulator.

Spectral fields are plain numpy arrays wrapped in frozen dataclasses so they
can be handed between threads without copying concerns. Coefficient arrays
may carry a leading batch axis; the last axis is always the mode axis.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


@dataclass(frozen=True)
class DensityField:
    """A density in cosine representation together with its grid values."""

    coeffs: np.ndarray
    grid_values: np.ndarray

    @property
    def mass(self) -> float:
        """Integral over the unit reference domain, i.e. the mode-0 coefficient."""
        return float(self.coeffs[0])

    @property
    def positive(self) -> bool:
        return bool(np.min(self.grid_values) > 0.0)

    @property
    def n_modes(self) -> int:
        return int(self.coeffs.shape[-1])


@dataclass(frozen=True)
class SineField:
    """Sine-represented intermediate produced by the spectral derivative."""

    coeffs: np.ndarray


@dataclass(frozen=True)
class BoundaryState:
    """Endpoints of the physical domain [L_minus, L_plus]."""

    l_minus: float = 0.0
    l_plus: float = 1.0

    @property
    def length(self) -> float:
        return self.l_plus - self.l_minus


@dataclass(frozen=True)
class EdgeFlux:
    """Edge data driving the moving-boundary equation.

    Derivatives are taken with respect to the reference coordinate s; the
    boundary update applies the 1/(L_plus - L_minus) Jacobian itself.
    """

    rho_minus: float
    rho_plus: float
    dmu_minus: float = 0.0
    dmu_plus: float = 0.0
    noise_amplitude: float = 0.0


@dataclass
class ReflectionLedger:
    """Discrete record of the penalty that stands in for the reflection measure."""

    times: List[float] = field(default_factory=list)
    step_mass: List[float] = field(default_factory=list)
    support: List[List[int]] = field(default_factory=list)

    @property
    def total_mass(self) -> float:
        return float(sum(self.step_mass))

    def cumulative(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.step_mass, dtype=float))

    def record(self, t: float, mass: float, cells: List[int]) -> None:
        self.times.append(t)
        self.step_mass.append(mass)
        self.support.append(cells)


@dataclass
class Trajectory:
    """Recorded states, monitors and ledger of one run."""

    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    monitors: List[Dict[str, float]] = field(default_factory=list)
    penalty_mass: List[float] = field(default_factory=list)
    boundaries: List[BoundaryState] = field(default_factory=list)
    ledger: ReflectionLedger = field(default_factory=ReflectionLedger)
    steps_taken: int = 0
    failed: bool = False
    error: Optional[str] = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class EnsembleResult:
    """Outcome of a batched run over several trajectories."""

    final_states: np.ndarray
    penalty_mass: np.ndarray
    steps_taken: int
    streams: List[int]
