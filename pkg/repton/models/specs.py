"""Model, noise and stepping specifications."""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from repton.shared_libraries import constants


class StrictModel(BaseModel):
    """Base for every config model: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class PotentialFamily(str, Enum):
    """Potential families V(r)."""
    SINGULAR_P2 = "singular_p2"
    SINGULAR_P3 = "singular_p3"
    REGULARIZED = "regularized"
    POLYNOMIAL_TEST = "polynomial_test"


class MobilityKind(str, Enum):
    """Mobility laws M(r)."""
    INVERSE = "inverse"
    CONSTANT = "constant"


class NoiseKind(str, Enum):
    """Spatial structure of the Wiener process."""
    SCALAR = "scalar"
    CYLINDRICAL = "cylindrical"
    Q_DIAGONAL = "q_diagonal"


class AmplitudeKind(str, Enum):
    """How the noise amplitude depends on the state."""
    ADDITIVE = "additive"
    MULTIPLICATIVE_FLOORED = "multiplicative_floored"


class SchemeKind(str, Enum):
    """Time-stepping splits."""
    SEMI_IMPLICIT_ALPHA = "semi_implicit_alpha"
    FULLY_EXPLICIT = "fully_explicit"


SINGULAR_FAMILIES = (PotentialFamily.SINGULAR_P2, PotentialFamily.SINGULAR_P3)


class PotentialSpec(StrictModel):
    """Selects the potential V and the gradient-energy coefficient alpha."""
    family: PotentialFamily = Field(..., description="Potential family")
    alpha: float = Field(0.0, ge=0.0, description="Gradient-energy coefficient")
    additive_constant: float = Field(0.0, description="Constant C added to the chemical potential")
    n: Optional[int] = Field(None, ge=1, description="Regularization level (regularized family only)")
    base: PotentialFamily = Field(
        PotentialFamily.SINGULAR_P2,
        description="Singular family that the regularized family extends",
    )
    curvature: float = Field(0.0, ge=0.0, description="Curvature of the polynomial test family")
    center: float = Field(1.0, description="Minimum location of the polynomial test family")
    eval_floor: float = Field(
        constants.EVAL_FLOOR,
        gt=0.0,
        description="Singular families refuse to evaluate at or below this value",
    )

    @model_validator(mode="after")
    def _check_family(self) -> "PotentialSpec":
        if self.family == PotentialFamily.REGULARIZED and self.n is None:
            raise ValueError("n is required for the regularized family")
        if self.base not in SINGULAR_FAMILIES:
            raise ValueError("base must be singular_p2 or singular_p3")
        return self

    @property
    def is_singular(self) -> bool:
        return self.family in SINGULAR_FAMILIES

    def regularized(self, n: int) -> "PotentialSpec":
        """Return the level-n regularization of this (singular) potential."""
        base = self.family if self.is_singular else self.base
        return self.model_copy(
            update={"family": PotentialFamily.REGULARIZED, "n": n, "base": base}
        )


class MobilitySpec(StrictModel):
    """Mobility law inside the divergence-form drift."""
    kind: MobilityKind = Field(MobilityKind.INVERSE, description="Mobility law")
    value: float = Field(1.0, gt=0.0, description="Value of the constant mobility")
    floor: float = Field(
        constants.MOBILITY_FLOOR,
        gt=0.0,
        description="Floor applied to the density inside the inverse mobility",
    )


class ModelSpec(PotentialSpec):
    """A potential together with its mobility."""
    mobility: MobilitySpec = Field(default_factory=MobilitySpec, description="Mobility law")


class NoiseSpec(StrictModel):
    """Wiener noise in the spectral frame."""
    kind: NoiseKind = Field(NoiseKind.CYLINDRICAL, description="Spatial structure")
    n_modes: Optional[int] = Field(
        None, ge=1, description="Noise truncation K_noise (defaults to the state truncation)"
    )
    spectrum: List[float] = Field(
        default_factory=list, description="Per-mode intensities q_k, k = 1, 2, ..."
    )
    amplitude: AmplitudeKind = Field(AmplitudeKind.ADDITIVE, description="Amplitude law")
    sigma: float = Field(1.0, ge=0.0, description="Noise amplitude")
    floor: float = Field(
        constants.NOISE_FLOOR,
        gt=0.0,
        description="Density floor inside the multiplicative amplitude",
    )
    conservative: bool = Field(True, description="Apply the outer spatial derivative")
    seed: Optional[int] = Field(
        None, ge=0, lt=2**64, description="Noise seed (falls back to the experiment seed)"
    )

    @field_validator("spectrum")
    @classmethod
    def _nonnegative_spectrum(cls, value: List[float]) -> List[float]:
        if any(q < 0.0 for q in value):
            raise ValueError("spectrum entries must be nonnegative")
        return value

    @model_validator(mode="after")
    def _check_kind(self) -> "NoiseSpec":
        if self.kind == NoiseKind.Q_DIAGONAL and not self.spectrum:
            raise ValueError("q_diagonal noise needs a nonempty spectrum")
        return self

    @property
    def trace(self) -> float:
        """Trace of Q for q_diagonal noise, number of active modes otherwise."""
        if self.kind == NoiseKind.Q_DIAGONAL:
            return float(sum(self.spectrum))
        if self.kind == NoiseKind.SCALAR:
            return 1.0
        return float(self.n_modes) if self.n_modes is not None else float("nan")

    @property
    def is_additive(self) -> bool:
        return self.amplitude == AmplitudeKind.ADDITIVE


class StepperConfig(StrictModel):
    """Time stepping, positivity floor and penalty."""
    dt: float = Field(1e-4, gt=0.0, description="Time step")
    t_end: float = Field(1.0, ge=0.0, description="Final time")
    scheme: SchemeKind = Field(SchemeKind.SEMI_IMPLICIT_ALPHA, description="Implicit/explicit split")
    positivity_floor: float = Field(
        constants.POSITIVITY_FLOOR, ge=0.0, description="Penalty threshold delta"
    )
    penalty_strength: float = Field(
        constants.PENALTY_STRENGTH, ge=0.0, description="Penalty strength kappa"
    )
    stabilization: float = Field(
        0.0,
        ge=0.0,
        description="Linear stabilization S: S*Laplacian moved to the implicit side",
    )
    record_every: int = Field(1, ge=1, description="Record cadence in steps")
    moving_boundary: bool = Field(False, description="Evolve the diagnostic boundary SDE")
    floor_initial: bool = Field(
        True,
        description="Lift initial data to twice the positivity floor while the penalty is on",
    )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def penalty_active(self) -> bool:
        return self.penalty_strength > 0.0


class DiscretizationSpec(StrictModel):
    """Spectral truncation and collocation grid."""
    n_modes: int = Field(16, ge=1, description="Number of cosine modes K")
    oversampling: int = Field(2, ge=1, description="Grid points per mode, G = oversampling * K")


class InitialCondition(StrictModel):
    """Initial density: mass plus cosine-mode perturbations."""
    mass: float = Field(1.0, description="Mass (mode-0 coefficient)")
    modes: Dict[int, float] = Field(
        default_factory=dict, description="Cosine coefficients for modes k >= 1"
    )

    @field_validator("modes")
    @classmethod
    def _positive_modes(cls, value: Dict[int, float]) -> Dict[int, float]:
        if any(k < 1 for k in value):
            raise ValueError("mode indices must be >= 1")
        return value
