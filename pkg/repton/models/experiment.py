"""Experiment configuration: schema, parsing and canonical serialization."""

import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

from pydantic import Field, ValidationError

from repton.models.specs import (
    DiscretizationSpec,
    InitialCondition,
    ModelSpec,
    NoiseSpec,
    StepperConfig,
    StrictModel,
)
from repton.shared_libraries.errors import ConfigurationError

logger = logging.getLogger(__name__)


class ExperimentKind(str, Enum):
    """Experiment dispatched by the runner."""
    SIMULATE = "simulate"
    CONTRACT = "contract"
    GIBBS = "gibbs"
    SCAN = "scan"
    CHECK = "check"


class StudyKind(str, Enum):
    """Multi-run studies available under `simulate`."""
    NONE = "none"
    STATIONARY_SPECTRUM = "stationary_spectrum"
    APRIORI_BOUND = "apriori_bound"
    REFLECTION = "reflection"
    DRIFT_EQUIVALENCE = "drift_equivalence"


class SamplerKind(str, Enum):
    """Metropolis samplers for the Gibbs measure."""
    PCN = "pcn"
    RWM = "rwm"


class CheckFixture(str, Enum):
    """Operator pairs the assumption checker can be pointed at."""
    LINEAR = "linear"
    MODEL = "model"
    UNFLOORED = "unfloored"


class CheckNorm(str, Enum):
    """Norm used for the H-distance in monotonicity and coercivity."""
    HMINUS1 = "hminus1"
    L2 = "l2"


class EnsembleConfig(StrictModel):
    """Batch of trajectories used for dynamic averages."""
    n_trajectories: int = Field(1, ge=1, description="Trajectories in the batch")
    burn_in_fraction: float = Field(0.5, ge=0.0, lt=1.0, description="Discarded fraction of the run")
    sample_every: int = Field(10, ge=1, description="Steps between time-average samples")


class ChainConfig(StrictModel):
    """Metropolis chain targeting the Gibbs measure."""
    sampler: SamplerKind = Field(SamplerKind.PCN, description="Proposal family")
    beta: float = Field(0.5, gt=0.0, le=1.0, description="pCN step size (RWM: proposal scale)")
    n_samples: int = Field(10000, ge=1, description="Retained samples after thinning")
    burn_in: int = Field(1000, ge=0, description="Discarded iterations, also the tuning window")
    thin: int = Field(1, ge=1, description="Keep every thin-th state")
    tune: bool = Field(True, description="Adapt beta during burn-in")
    target_acceptance: float = Field(0.25, gt=0.0, lt=1.0)


class ScanConfig(StrictModel):
    """Regularization levels and test functions for the convergence scan."""
    n_values: List[int] = Field(
        default_factory=lambda: [1, 2, 5, 10, 50, 200], description="Regularization levels n"
    )
    n_gamma_samples: int = Field(10000, ge=1, description="Size of the shared reference sample set")
    psi: List[str] = Field(
        default_factory=lambda: ["one", "cos_1", "var_1"], description="Test functions"
    )


class CheckConfig(StrictModel):
    """Assumption-checker sampling."""
    fixture: CheckFixture = Field(CheckFixture.MODEL, description="Operator pair under test")
    n_samples: int = Field(10000, ge=1, description="Random triples")
    ball_radius: float = Field(0.5, gt=0.0, description="Radius of the V-ball the fluctuations are drawn from")
    c_ref: float = Field(0.0, description="Monotonicity constant the samples are checked against")
    norm: CheckNorm = Field(CheckNorm.HMINUS1, description="H norm of the check")
    refinements: int = Field(10, ge=2, description="Hemicontinuity refinement levels")
    trim_fraction: float = Field(0.01, ge=0.0, lt=0.5, description="Outlier fraction trimmed from fits")


class ContractionConfig(StrictModel):
    """Second initial datum and tolerances of the contraction experiment."""
    second: InitialCondition = Field(
        default_factory=lambda: InitialCondition(modes={1: 0.2}), description="Second initial datum"
    )
    tolerance: float = Field(1e-10, ge=0.0, description="Allowed upward step of the distance")
    rate_tolerance: float = Field(0.02, gt=0.0, description="Relative tolerance of the linear decay rate")


class MixingConfig(StrictModel):
    """Empirical mixing diagnostic run alongside `contract`."""
    enabled: bool = Field(False, description="Run the diagnostic")
    n_trajectories: int = Field(256, ge=2)
    n_times: int = Field(10, ge=2, description="Observation times over the horizon")
    observable: str = Field("mode_1", description="Observable phi")
    rate_tolerance: float = Field(0.2, gt=0.0)


class StudyConfig(StrictModel):
    """Parameters of the multi-run studies."""
    modes: List[int] = Field(default_factory=lambda: [1, 2, 3, 4], description="Modes compared in spectra")
    relative_tolerance: float = Field(0.05, gt=0.0)
    t_values: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    slope_tolerance: float = Field(0.15, gt=0.0)
    refinement_levels: int = Field(3, ge=2, description="dt halvings in the reflection study")
    ratio_window: List[float] = Field(default_factory=lambda: [0.3, 0.8])
    grid_sizes: List[int] = Field(default_factory=lambda: [64, 128, 256, 512])
    reduction_target: float = Field(4.0, gt=0.0)
    reduction_tolerance: float = Field(0.2, gt=0.0)


class AnalysisConfig(StrictModel):
    """Everything the analysis experiments need besides model and stepping."""
    study: StudyKind = Field(StudyKind.NONE, description="Study run by `simulate`")
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    chain: ChainConfig = Field(default_factory=ChainConfig)
    observables: List[str] = Field(
        default_factory=list, description="Observables compared (empty: all standard ones)"
    )
    min_effective_samples: float = Field(
        100.0, ge=0.0, description="Below this the comparison is inconclusive"
    )
    compare_dynamics: bool = Field(True, description="`gibbs` also runs the dynamic average")
    significance: float = Field(
        1e-3, gt=0.0, lt=1.0, description="Family-wise level of the distribution tests on Gibbs samples"
    )
    scan: ScanConfig = Field(default_factory=ScanConfig)
    check: CheckConfig = Field(default_factory=CheckConfig)
    contraction: ContractionConfig = Field(default_factory=ContractionConfig)
    mixing: MixingConfig = Field(default_factory=MixingConfig)
    studies: StudyConfig = Field(default_factory=StudyConfig)


class OutputConfig(StrictModel):
    """Output directory and optional files."""
    directory: Optional[str] = Field(None, description="Output directory (falls back to REPTON_OUTPUT_DIR)")
    write_coefficients: bool = Field(False, description="Append c0..c{K-1} columns to trajectory.csv")
    write_snapshot: bool = Field(True, description="Write the binary final-state snapshot")


class ExperimentConfig(StrictModel):
    """Complete description of one experiment."""
    kind: ExperimentKind = Field(..., description="Experiment kind")
    model: ModelSpec = Field(..., description="Potential, alpha and mobility")
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    stepper: StepperConfig = Field(default_factory=StepperConfig)
    discretization: DiscretizationSpec = Field(default_factory=DiscretizationSpec)
    initial: InitialCondition = Field(default_factory=InitialCondition)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = Field(0, ge=0, lt=2**64, description="Master seed")

    @property
    def effective_seed(self) -> int:
        """The noise seed when given, otherwise the master seed."""
        return self.noise.seed if self.noise.seed is not None else self.seed


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']} ({item['type']})")
    return "; ".join(parts)


def parse_config(source: Union[str, Path]) -> ExperimentConfig:
    """Parse a config from a JSON file path or inline JSON text.

    Raises:
        ConfigurationError: Malformed JSON or schema violation; the message
            names the offending key path and the failed constraint.
    """
    text = str(source)
    path = Path(text)
    if not text.lstrip().startswith("{"):
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {text}")
        text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config is not valid JSON: {e}") from e
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid config: {_describe(e)}") from e
    logger.debug(f"Parsed {config.kind.value} config")
    return config


def serialize(config: ExperimentConfig) -> str:
    """Canonical JSON: sorted keys, no whitespace."""
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(serialize(config).encode("utf-8")).hexdigest()
