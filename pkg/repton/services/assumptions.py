"""Sample-based checks of the variational-framework assumptions.

The operators are the drift A and the noise map B of dX = A(X) dt + B(X) dW
on the K-mode truncation. Pairs u, v are drawn with the same mass, so u - v
lives in the mean-zero sector and both the L2 and the H^-1 norm are
available for the H-distance:

    weak monotonicity   2<A(u) - A(v), u - v>_H + |B(u) - B(v)|_H^2 <= c |u - v|_H^2
    coercivity          2<A(u), u - m>_H + |B(u)|_H^2 <= c1 |u - m|_H^2 - c2 |u - m|_V^2 + f
    boundedness         |A(u)|_V* <= c3 (1 + |u|_V^(q - 1))
    hemicontinuity      lambda -> <A(u + lambda v), w> continuous

The conservative drift is dissipative in H^-1, which is the default norm.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from repton.models.experiment import CheckConfig, CheckFixture, CheckNorm, ExperimentConfig
from repton.models.reports import (
    AssumptionReport,
    BoundednessReport,
    CoercivityReport,
    HemicontinuityReport,
    MonotonicityReport,
    Verdict,
)
from repton.models.specs import (
    AmplitudeKind,
    MobilityKind,
    MobilitySpec,
    ModelSpec,
    NoiseKind,
    NoiseSpec,
    PotentialFamily,
)
from repton.shared_libraries.errors import PreconditionError
from repton.tools import potentials
from repton.tools.noise import WienerIncrements, make_generator, random_positive_fields
from repton.tools.spectral import SpectralBasis

logger = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator, int], np.ndarray]

# float rounding allowance relative to the magnitude of the compared terms
_ROUNDING = 1e-12


@dataclass
class OperatorPair:
    """Drift and noise maps of one fixture, plus how to draw test states."""

    label: str
    basis: SpectralBasis
    mass: float
    drift: Callable[[np.ndarray], np.ndarray]
    sampler: Sampler
    noise_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constant_noise: Optional[np.ndarray] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def state_dependent_noise(self) -> bool:
        return self.noise_matrix is not None

    def noise_at(self, coeffs: np.ndarray) -> np.ndarray:
        if self.noise_matrix is not None:
            return self.noise_matrix(coeffs)
        if self.constant_noise is not None:
            return self.constant_noise
        return np.zeros((self.basis.n_modes, 0))


def ball_sampler(basis: SpectralBasis, mass: float, radius: float) -> Sampler:
    """States mass + x with x uniform in radius over random V-norm directions."""

    def draw(rng: np.random.Generator, count: int) -> np.ndarray:
        out = np.zeros((count, basis.n_modes))
        out[:, 0] = mass
        if basis.n_modes > 1:
            z = rng.standard_normal((count, basis.n_modes - 1))
            z /= np.sqrt(1.0 + basis.eigenvalues[1:])
            norms = np.sqrt(np.sum((1.0 + basis.eigenvalues[1:]) * z**2, axis=1))
            scale = radius * rng.uniform(0.05, 1.0, count) / np.maximum(norms, 1e-300)
            out[:, 1:] = z * scale[:, None]
        return out

    return draw


def linear_fixture(
    n_modes: int, alpha: float, sigma: float = 1.0, mass: float = 1.0, radius: float = 0.5
) -> OperatorPair:
    """A(u) = -alpha bilaplacian(u) with additive cylindrical noise."""
    basis = SpectralBasis(n_modes)
    rate = alpha * basis.eigenvalues**2
    noise = WienerIncrements(NoiseSpec(kind=NoiseKind.CYLINDRICAL, sigma=sigma), basis, seed=0)

    def drift(coeffs: np.ndarray) -> np.ndarray:
        out = -rate * np.asarray(coeffs, dtype=float)
        out[..., 0] = 0.0
        return out

    return OperatorPair(
        label="linear",
        basis=basis,
        mass=mass,
        drift=drift,
        sampler=ball_sampler(basis, mass, radius),
        constant_noise=noise.increment_matrix(),
        jacobian=lambda _: np.diag(-rate),
    )


def model_fixture(
    model: ModelSpec,
    noise: NoiseSpec,
    basis: SpectralBasis,
    mass: float = 1.0,
    radius: float = 0.5,
) -> OperatorPair:
    """Drift and noise of a regularized (or polynomial) model.

    Raises:
        PreconditionError: Singular potentials are not defined on the whole ball.
    """
    if model.is_singular:
        raise PreconditionError(
            f"check_assumptions needs a regularized model, got {model.family.value}"
        )
    source = WienerIncrements(noise, basis, seed=0)

    def drift(coeffs: np.ndarray) -> np.ndarray:
        return potentials.drift(model, model.mobility, basis, coeffs)

    pair = OperatorPair(
        label="model",
        basis=basis,
        mass=mass,
        drift=drift,
        sampler=ball_sampler(basis, mass, radius),
        jacobian=lambda c: finite_difference_jacobian(drift, c),
    )
    if noise.is_additive:
        pair.constant_noise = source.increment_matrix()
    else:
        pair.noise_matrix = source.increment_matrix
    return pair


def unfloored_fixture(
    n_modes: int, alpha: float = 1e-3, sigma: float = 1.0, mass: float = 0.05
) -> OperatorPair:
    """Linear drift with the multiplicative amplitude sigma / sqrt(rho) left unfloored.

    States are positive but close to zero, where the amplitude is not
    Lipschitz.
    """
    basis = SpectralBasis(n_modes)
    rate = alpha * basis.eigenvalues**2
    spec = NoiseSpec(
        kind=NoiseKind.CYLINDRICAL, amplitude=AmplitudeKind.MULTIPLICATIVE_FLOORED, sigma=sigma
    )
    source = WienerIncrements(spec, basis, seed=0)

    def drift(coeffs: np.ndarray) -> np.ndarray:
        out = -rate * np.asarray(coeffs, dtype=float)
        out[..., 0] = 0.0
        return out

    return OperatorPair(
        label="unfloored",
        basis=basis,
        mass=mass,
        drift=drift,
        sampler=lambda rng, count: random_positive_fields(basis, count, rng, mass=mass),
        noise_matrix=lambda c: source.increment_matrix(c, floor=0.0),
        jacobian=lambda _: np.diag(-rate),
    )


def build_fixture(config: ExperimentConfig) -> OperatorPair:
    """Fixture selected by `analysis.check.fixture`."""
    check = config.analysis.check
    k = config.discretization.n_modes
    match check.fixture:
        case CheckFixture.LINEAR:
            alpha = potentials.effective_alpha(config.model, config.model.mobility)
            return linear_fixture(k, alpha, config.noise.sigma, config.initial.mass, check.ball_radius)
        case CheckFixture.UNFLOORED:
            return unfloored_fixture(k, sigma=config.noise.sigma)
    basis = SpectralBasis(k, oversampling=config.discretization.oversampling)
    return model_fixture(config.model, config.noise, basis, config.initial.mass, check.ball_radius)


def convex_regularized_model(alpha: float, n: int = 20) -> ModelSpec:
    """Regularized p=2 model with constant unit mobility."""
    return ModelSpec(
        family=PotentialFamily.REGULARIZED,
        n=n,
        alpha=alpha,
        mobility=MobilitySpec(kind=MobilityKind.CONSTANT, value=1.0),
    )


def finite_difference_jacobian(
    drift: Callable[[np.ndarray], np.ndarray], coeffs: np.ndarray, step: float = 1e-6
) -> np.ndarray:
    """Central-difference Jacobian of a drift at one state, shape (K, K)."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.size
    eps = step * max(1.0, float(np.max(np.abs(coeffs))))
    shifts = np.eye(n) * eps
    plus = drift(coeffs + shifts)
    minus = drift(coeffs - shifts)
    return ((plus - minus) / (2.0 * eps)).T


class _Geometry:
    """H inner products and Hilbert-Schmidt norms for the chosen norm."""

    def __init__(self, basis: SpectralBasis, norm: CheckNorm):
        self.basis = basis
        self.norm = norm
        lam = basis.eigenvalues
        self.weights = np.ones_like(lam)
        if norm == CheckNorm.HMINUS1:
            self.weights = np.zeros_like(lam)
            self.weights[1:] = 1.0 / lam[1:]

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.norm == CheckNorm.HMINUS1:
            return self.basis.hminus1_inner(f, g)
        return self.basis.l2_inner(f, g)

    def hs_norm_sq(self, matrix: np.ndarray) -> float:
        return float(np.sum(self.weights[:, None] * matrix**2))


def sector_constant(pair: OperatorPair, norm: CheckNorm) -> Optional[float]:
    """Largest generalized eigenvalue of (H J + J^T H, H) on mean-zero directions.

    J is the drift Jacobian at the constant state of the fixture's mass.
    """
    if pair.jacobian is None or pair.basis.n_modes < 2:
        return None
    state = pair.basis.constant(pair.mass)
    jac = pair.jacobian(state)[1:, 1:]
    geometry = _Geometry(pair.basis, norm)
    h = np.diag(geometry.weights[1:]) if norm == CheckNorm.HMINUS1 else np.eye(jac.shape[0])
    values = eigh(h @ jac + jac.T @ h, h, eigvals_only=True)
    return float(values[-1])


def _monotonicity(
    pair: OperatorPair, geometry: _Geometry, u: np.ndarray, v: np.ndarray, c_ref: float
) -> Tuple[int, float, float]:
    diff = u - v
    drift_diff = pair.drift(u) - pair.drift(v)
    drift_term = 2.0 * geometry.inner(drift_diff, diff)
    if pair.state_dependent_noise:
        noise_term = np.array(
            [geometry.hs_norm_sq(pair.noise_at(a) - pair.noise_at(b)) for a, b in zip(u, v)]
        )
    else:
        noise_term = np.zeros(u.shape[0])
    dist = geometry.inner(diff, diff)
    lhs = drift_term + noise_term
    excess = lhs - c_ref * dist
    allowance = _ROUNDING * (np.abs(drift_term) + noise_term + np.abs(c_ref) * dist)
    violations = int(np.count_nonzero(excess > allowance))
    worst = float(np.max(excess)) if excess.size else 0.0
    usable = dist > 0.0
    ratio = float(np.max(lhs[usable] / dist[usable])) if np.any(usable) else 0.0
    return violations, worst, ratio


def _trimmed_fit(
    design: np.ndarray, target: np.ndarray, trim_fraction: float
) -> Tuple[np.ndarray, float, int]:
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    n_trim = int(trim_fraction * target.size)
    if n_trim:
        residual = np.abs(target - design @ coeffs)
        keep = np.argsort(residual)[: target.size - n_trim]
        coeffs, *_ = np.linalg.lstsq(design[keep], target[keep], rcond=None)
    residual = target - design @ coeffs
    return coeffs, float(np.sqrt(np.mean(residual**2))), n_trim


def _coercivity(
    pair: OperatorPair,
    geometry: _Geometry,
    u: np.ndarray,
    trim_fraction: float,
    c2_sharp: Optional[float],
) -> CoercivityReport:
    basis = pair.basis
    x = u.copy()
    x[:, 0] = 0.0
    lhs = 2.0 * geometry.inner(pair.drift(u), x)
    lhs = lhs + np.array([geometry.hs_norm_sq(pair.noise_at(row)) for row in u])
    h_sq = geometry.inner(x, x)
    v_sq = basis.v_norm(x) ** 2
    design = np.column_stack([h_sq, -v_sq, np.ones_like(h_sq)])
    coeffs, rms, trimmed = _trimmed_fit(design, lhs, trim_fraction)
    # lift f so the fitted envelope covers every sample
    shift = max(0.0, float(np.max(lhs - design @ coeffs)))
    return CoercivityReport(
        c2_sharp=c2_sharp,
        c1=float(coeffs[0]),
        c2=float(coeffs[1]),
        f=float(coeffs[2] + shift),
        fit_residual=rms,
        trimmed=trimmed,
    )


def _boundedness(pair: OperatorPair, u: np.ndarray) -> BoundednessReport:
    basis = pair.basis
    a = basis.v_dual_norm(pair.drift(u))
    b = basis.v_norm(u)
    usable = (a > 0.0) & (b > 0.0)
    slope = 0.0
    if np.count_nonzero(usable) >= 2 and np.ptp(np.log(b[usable])) > 0.0:
        slope = max(0.0, float(np.polyfit(np.log(b[usable]), np.log(a[usable]), 1)[0]))
    c3 = float(np.max(a / (1.0 + b**slope))) if a.size else 0.0
    return BoundednessReport(c3=c3, exponent=slope + 1.0, n_samples=int(u.shape[0]))


def _hemicontinuity(
    pair: OperatorPair, rng: np.random.Generator, count: int, refinements: int
) -> HemicontinuityReport:
    u = pair.sampler(rng, count)
    v = pair.sampler(rng, count)
    v[:, 0] = 0.0
    w = pair.sampler(rng, count)
    base = pair.basis.l2_inner(pair.drift(u), w)
    gaps = []
    for j in range(refinements):
        moved = pair.basis.l2_inner(pair.drift(u + 0.5**j * v), w)
        gaps.append(float(np.max(np.abs(moved - base))))
    slack = _ROUNDING * (1.0 + float(np.max(np.abs(base))))
    passed = gaps[-1] <= 4.0 * 0.5 ** (refinements - 1) * gaps[0] + slack
    return HemicontinuityReport(
        refinements=refinements,
        max_initial_gap=gaps[0],
        max_final_gap=gaps[-1],
        passed=bool(passed),
    )


def check_assumptions(
    pair: OperatorPair, config: Optional[CheckConfig] = None, seed: int = 0
) -> AssumptionReport:
    """Sample the four assumptions on one operator pair.

    Args:
        pair: Fixture under test.
        config: Sample count, c_ref, norm, refinements and trimming.
        seed: Seed of the sample stream.

    Returns:
        AssumptionReport; the verdict fails on any monotonicity violation or
        a hemicontinuity refinement that does not converge.
    """
    config = config or CheckConfig()
    rng = make_generator(seed, 0)
    geometry = _Geometry(pair.basis, config.norm)
    u = pair.sampler(rng, config.n_samples)
    v = pair.sampler(rng, config.n_samples)

    violations, worst, ratio = _monotonicity(pair, geometry, u, v, config.c_ref)
    sector = sector_constant(pair, config.norm)
    monotonicity = MonotonicityReport(
        n_pairs=config.n_samples,
        c_ref=config.c_ref,
        violations=violations,
        worst_violation=worst,
        sample_sup_ratio=ratio,
        constant=max(0.0, ratio),
        sector_constant=sector,
        passed=violations == 0,
    )
    c2_sharp = None if sector is None or pair.state_dependent_noise else max(0.0, -sector)
    coercivity = _coercivity(pair, geometry, u, config.trim_fraction, c2_sharp)
    boundedness = _boundedness(pair, u)
    hemicontinuity = _hemicontinuity(
        pair, rng, min(config.n_samples, 200), config.refinements
    )

    limitations: List[str] = [
        "f(t) and g(t) are fitted as constants",
        "the sector constant uses the drift Jacobian at the constant state",
    ]
    if pair.state_dependent_noise:
        limitations.append("the sector constant ignores the state-dependent noise")
    verdict = Verdict.PASS if monotonicity.passed and hemicontinuity.passed else Verdict.FAIL
    logger.info(
        f"Assumption check [{pair.label}, {config.norm.value}]: {violations} violations "
        f"over {config.n_samples} pairs, sup ratio {ratio:.4g}, verdict {verdict.value}"
    )
    return AssumptionReport(
        fixture=pair.label,
        n_modes=pair.basis.n_modes,
        norm=config.norm.value,
        hemicontinuity=hemicontinuity,
        monotonicity=monotonicity,
        coercivity=coercivity,
        boundedness=boundedness,
        limitations=limitations,
        verdict=verdict,
    )
