"""Report models emitted by the verification laboratory."""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class Verdict(str, Enum):
    """Outcome of a property check."""
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"
    NOT_APPLICABLE = "not_applicable"


def combine_verdicts(verdicts: List["Verdict"]) -> "Verdict":
    """Fail dominates, then inconclusive; an empty list passes."""
    if Verdict.FAIL in verdicts:
        return Verdict.FAIL
    if Verdict.INCONCLUSIVE in verdicts:
        return Verdict.INCONCLUSIVE
    if verdicts and all(v == Verdict.NOT_APPLICABLE for v in verdicts):
        return Verdict.NOT_APPLICABLE
    return Verdict.PASS


class TraceBoundReport(BaseModel):
    """Affine bound of the Ito correction in |rho|^2."""
    c_q1: float = Field(..., description="Constant term C_Q1")
    c_q2: float = Field(..., description="Coefficient C_Q2 of |rho|^2")
    residual_rms: float = Field(..., description="RMS residual of the least-squares fit")
    n_samples: int = Field(..., description="Number of sample densities")
    trace_min: float
    trace_max: float


class HemicontinuityReport(BaseModel):
    """Refinement differences of lambda -> <A(u + lambda v), w>."""
    refinements: int
    max_initial_gap: float
    max_final_gap: float
    passed: bool


class MonotonicityReport(BaseModel):
    """Weak monotonicity 2<A(u)-A(v), u-v> + |B(u)-B(v)|^2 <= c |u-v|^2."""
    n_pairs: int
    c_ref: float = Field(..., description="Constant the samples are checked against")
    violations: int
    worst_violation: float = Field(..., description="Largest excess over c_ref |u-v|^2 (<= 0 if none)")
    sample_sup_ratio: float = Field(..., description="Largest sampled ratio LHS / |u-v|^2")
    constant: float = Field(..., description="Smallest nonnegative admissible c")
    sector_constant: Optional[float] = Field(
        None, description="Sharp constant over mean-zero directions (negative = strict)"
    )
    passed: bool


class CoercivityReport(BaseModel):
    """2<A(u), u> + |B(u)|^2 <= c1 |u|^2 - c2 |u|_V^2 + f."""
    c2_sharp: Optional[float] = Field(
        None, description="Dissipation rate over mean-zero directions in the H norm"
    )
    c1: float
    c2: float
    f: float
    exponent: float = 2.0
    fit_residual: float
    trimmed: int


class BoundednessReport(BaseModel):
    """|A(u)|_{V*} <= c3 (1 + |u|_V^(q-1))."""
    c3: float
    exponent: float
    n_samples: int


class AssumptionReport(BaseModel):
    """Sample-based check of the variational-framework assumptions."""
    fixture: str
    n_modes: int
    norm: str
    hemicontinuity: HemicontinuityReport
    monotonicity: MonotonicityReport
    coercivity: CoercivityReport
    boundedness: BoundednessReport
    limitations: List[str] = Field(default_factory=list)
    verdict: Verdict


class ContractionReport(BaseModel):
    """H^-1 distance of two solutions driven by the same noise path."""
    n_steps: int
    dt: float
    initial_distance: float
    final_distance: float
    max_upward_step: float
    identical_paths: bool
    fitted_rate: Optional[float] = None
    expected_rate: Optional[float] = None
    tolerance: float
    verdict: Verdict


class ObservableEstimate(BaseModel):
    """Monte Carlo estimate of one observable."""
    name: str
    mean: float
    std_error: float
    effective_samples: float


class ChainReport(BaseModel):
    """Diagnostics of a Metropolis chain targeting the Gibbs measure."""
    sampler: str
    beta: float
    acceptance_rate: float
    n_samples: int
    tuning_failed: bool
    estimates: List[ObservableEstimate]


class ComparisonRow(BaseModel):
    """One observable compared between two estimators."""
    observable: str
    first: float
    first_error: float
    second: float
    second_error: float
    difference: float
    combined_error: float
    verdict: Verdict


class ComparisonReport(BaseModel):
    """Observable-by-observable agreement of two estimators."""
    labels: List[str]
    rows: List[ComparisonRow]
    min_effective_samples: float
    verdict: Verdict


class DistributionRow(BaseModel):
    """Kolmogorov-Smirnov test of one sample marginal against its reference law."""
    statistic: str = Field(..., description="mode_k or the quadratic form chi2")
    ks_statistic: float
    p_value: float


class DistributionReport(BaseModel):
    """Goodness of fit of decorrelated chain samples against a Gaussian law."""
    rows: List[DistributionRow]
    stride: int = Field(..., description="Thinning applied before testing")
    n_samples: int = Field(..., description="Samples entering each test")
    significance: float
    verdict: Verdict


class ScanRow(BaseModel):
    """Estimates of integral psi exp(-E^n) d gamma at one level n."""
    n: int
    estimates: Dict[str, float]
    anchor_weights: Dict[str, float]


class ScanReport(BaseModel):
    """Convergence of the regularized Gibbs weights in n."""
    rows: List[ScanRow]
    limit_estimates: Dict[str, float]
    limit_gaps: Dict[str, List[float]]
    per_sample_violations: int
    estimates_monotone: bool
    negative_anchor_vanishes: bool
    n_samples: int
    verdict: Verdict


class MixingReport(BaseModel):
    """Empirical decay of |E phi(rho1_t) - E phi(rho2_t)|."""
    status: Verdict
    times: List[float] = Field(default_factory=list)
    differences: List[float] = Field(default_factory=list)
    fitted_rate: Optional[float] = None
    reference_rate: Optional[float] = None
    strong_feller_ratios: List[float] = Field(default_factory=list)
    note: Optional[str] = None


class StudyReport(BaseModel):
    """Outcome of a multi-run study with a tabular body."""
    study: str
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any] = Field(default_factory=dict)
    verdict: Verdict


class ExperimentReport(BaseModel):
    """Top-level JSON document written by every experiment."""
    experiment_id: str
    kind: str
    config_hash: str
    seed: int
    versions: Dict[str, str]
    verdict: Verdict
    incomplete: bool = False
    error: Optional[str] = None
    result: Dict[str, Any] = Field(default_factory=dict)
