"""Config schema and report models."""

from .experiment import (
    AnalysisConfig,
    ChainConfig,
    CheckConfig,
    CheckFixture,
    CheckNorm,
    ContractionConfig,
    EnsembleConfig,
    ExperimentConfig,
    ExperimentKind,
    MixingConfig,
    OutputConfig,
    SamplerKind,
    ScanConfig,
    StudyConfig,
    StudyKind,
    config_hash,
    parse_config,
    serialize,
)
from .reports import (
    AssumptionReport,
    ComparisonReport,
    ContractionReport,
    ExperimentReport,
    MixingReport,
    ScanReport,
    StudyReport,
    Verdict,
    combine_verdicts,
)
from .specs import (
    AmplitudeKind,
    DiscretizationSpec,
    InitialCondition,
    MobilityKind,
    MobilitySpec,
    ModelSpec,
    NoiseKind,
    NoiseSpec,
    PotentialFamily,
    PotentialSpec,
    SchemeKind,
    StepperConfig,
)

__all__ = [
    "AmplitudeKind",
    "AnalysisConfig",
    "AssumptionReport",
    "ChainConfig",
    "CheckConfig",
    "CheckFixture",
    "CheckNorm",
    "ComparisonReport",
    "ContractionConfig",
    "ContractionReport",
    "DiscretizationSpec",
    "EnsembleConfig",
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentReport",
    "InitialCondition",
    "MixingConfig",
    "MixingReport",
    "MobilityKind",
    "MobilitySpec",
    "ModelSpec",
    "NoiseKind",
    "NoiseSpec",
    "OutputConfig",
    "PotentialFamily",
    "PotentialSpec",
    "SamplerKind",
    "ScanConfig",
    "ScanReport",
    "SchemeKind",
    "StepperConfig",
    "StudyConfig",
    "StudyKind",
    "StudyReport",
    "Verdict",
    "combine_verdicts",
    "config_hash",
    "parse_config",
    "serialize",
]
