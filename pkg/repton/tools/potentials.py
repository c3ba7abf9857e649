"""Potentials, mobilities, chemical potential, free energy and drift.

Families (C is the additive constant of the chemical potential):

    singular_p2      V(r) = (1 + C) r + 1/r        V'(r) = 1 + C - 1/r^2
    singular_p3      V(r) = C r + 1/(2 r^2)        V'(r) = C - 1/r^3
    regularized(n)   base singular V for r >= 1/n, and below 1/n the
                     second-order Taylor polynomial of V at 1/n
    polynomial_test  V(r) = curvature/2 (r - center)^2 + C r

The regularized family is C2 and convex on all of R. Because V''' < 0 for
both singular bases, the Taylor polynomial at t lies below V on (0, t) and
decreases as t grows, so V^n <= V^(n+1) <= V on (0, inf) and V^n(r) grows
without bound in n for every r < 0.

Singular families refuse to evaluate at or below `eval_floor`; clipping is
left to the integrator.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from repton.models.specs import (
    MobilityKind,
    MobilitySpec,
    PotentialFamily,
    PotentialSpec,
)
from repton.shared_libraries.errors import DomainError, PositivityViolationError
from repton.tools.spectral import SpectralBasis

logger = logging.getLogger(__name__)


def _singular_terms(
    family: PotentialFamily, constant: float, r: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """V, V' and V'' of a singular family (no domain check)."""
    with np.errstate(divide="ignore", over="ignore"):
        if family == PotentialFamily.SINGULAR_P2:
            inv = 1.0 / r
            return (1.0 + constant) * r + inv, 1.0 + constant - inv**2, 2.0 * inv**3
        inv = 1.0 / r
        return constant * r + 0.5 * inv**2, constant - inv**3, 3.0 * inv**4


def _regularized_terms(
    spec: PotentialSpec, r: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    threshold = 1.0 / spec.n
    c = spec.additive_constant
    below = r < threshold
    safe = np.where(below, threshold, r)
    value, slope, curvature = _singular_terms(spec.base, c, safe)
    if not np.any(below):
        return value, slope, curvature

    v_t, d_t, c_t = _singular_terms(spec.base, c, np.asarray(threshold))
    h = r - threshold
    taylor = v_t + d_t * h + 0.5 * c_t * h**2
    positive = below & (r > 0.0)
    exact, _, _ = _singular_terms(spec.base, c, np.where(positive, r, threshold))
    # keeps V^n <= V exactly in floating point
    taylor = np.where(positive, np.minimum(taylor, exact), taylor)
    value = np.where(below, taylor, value)
    slope = np.where(below, d_t + c_t * h, slope)
    curvature = np.where(below, c_t, curvature)
    return value, slope, curvature


def _terms(
    spec: PotentialSpec, r: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    match spec.family:
        case PotentialFamily.SINGULAR_P2 | PotentialFamily.SINGULAR_P3:
            return _singular_terms(spec.family, spec.additive_constant, r)
        case PotentialFamily.REGULARIZED:
            return _regularized_terms(spec, r)
        case PotentialFamily.POLYNOMIAL_TEST:
            shifted = r - spec.center
            return (
                0.5 * spec.curvature * shifted**2 + spec.additive_constant * r,
                spec.curvature * shifted + spec.additive_constant,
                np.full_like(r, spec.curvature),
            )
    raise DomainError(f"Unknown potential family {spec.family}")


def _check_domain(spec: PotentialSpec, r: np.ndarray) -> None:
    if spec.is_singular and np.any(r <= spec.eval_floor):
        bad = float(np.min(r))
        raise DomainError(
            f"{spec.family.value} is undefined at r={bad:.6g} "
            f"(evaluation floor {spec.eval_floor:g})"
        )


def _as_output(value: np.ndarray, scalar: bool):
    return float(value) if scalar else value


def potential_value(spec: PotentialSpec, r):
    """V(r), elementwise.

    Raises:
        DomainError: Singular family evaluated at r <= eval_floor.
    """
    arr = np.asarray(r, dtype=float)
    _check_domain(spec, arr)
    return _as_output(_terms(spec, arr)[0], arr.ndim == 0)


def potential_derivative(spec: PotentialSpec, r):
    """V'(r), elementwise."""
    arr = np.asarray(r, dtype=float)
    _check_domain(spec, arr)
    return _as_output(_terms(spec, arr)[1], arr.ndim == 0)


def potential_second_derivative(spec: PotentialSpec, r):
    arr = np.asarray(r, dtype=float)
    _check_domain(spec, arr)
    return _as_output(_terms(spec, arr)[2], arr.ndim == 0)


def mobility_values(mobility: MobilitySpec, rho_grid: np.ndarray) -> np.ndarray:
    """M(rho) on the grid; the inverse law uses max(rho, floor)."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    if mobility.kind == MobilityKind.CONSTANT:
        return np.full_like(rho_grid, mobility.value)
    return 1.0 / np.maximum(rho_grid, mobility.floor)


def effective_alpha(spec: PotentialSpec, mobility: MobilitySpec) -> float:
    """Coefficient of the bilaplacian in the drift.

    With a constant mobility m the drift is m/2 Laplacian(mu), so the
    gradient term contributes m * alpha; otherwise alpha enters directly.
    """
    if mobility.kind == MobilityKind.CONSTANT:
        return spec.alpha * mobility.value
    return spec.alpha


def gibbs_temperature(noise_sigma: float, mobility: MobilitySpec) -> float:
    """sigma^2 / m: the Gibbs weight is exp(-E / temperature)."""
    m = mobility.value if mobility.kind == MobilityKind.CONSTANT else 1.0
    return noise_sigma**2 / m


def require_positive(
    spec: PotentialSpec, basis: SpectralBasis, rho_grid: np.ndarray
) -> None:
    """Raise with the first violating location if a singular family sees rho <= floor."""
    if not spec.is_singular:
        return
    bad = np.asarray(rho_grid) <= spec.eval_floor
    if np.any(bad):
        flat = np.argmax(bad.reshape(-1, basis.n_grid).any(axis=1))
        row = np.asarray(rho_grid).reshape(-1, basis.n_grid)[flat]
        index = int(np.argmax(row <= spec.eval_floor))
        raise PositivityViolationError(index, float(basis.grid[index]), float(row[index]))


def local_chemical_potential(
    spec: PotentialSpec,
    basis: SpectralBasis,
    rho_grid: np.ndarray,
    clip_floor: Optional[float] = None,
) -> np.ndarray:
    """V'(rho) on the grid, optionally evaluated at max(rho, clip_floor)."""
    if clip_floor is not None and spec.is_singular:
        rho_grid = np.maximum(rho_grid, max(clip_floor, spec.eval_floor * 2.0))
    require_positive(spec, basis, rho_grid)
    return _terms(spec, np.asarray(rho_grid, dtype=float))[1]


def chemical_potential(
    spec: PotentialSpec, basis: SpectralBasis, coeffs: np.ndarray
) -> np.ndarray:
    """mu = V'(rho) - 2 alpha Laplacian(rho), returned in cosine coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    local = local_chemical_potential(spec, basis, basis.to_grid(coeffs))
    return basis.to_spectral(local) - 2.0 * spec.alpha * basis.laplacian(coeffs)


def nonlinear_drift(
    spec: PotentialSpec,
    mobility: MobilitySpec,
    basis: SpectralBasis,
    coeffs: np.ndarray,
    clip_floor: Optional[float] = None,
    extra_potential: Optional[np.ndarray] = None,
) -> np.ndarray:
    """1/2 d/ds (M(rho) d/ds V'(rho)), mode-0 exactly zero.

    `extra_potential` is added to V'(rho) on the grid before differentiation.
    """
    rho_grid = basis.to_grid(coeffs)
    local = local_chemical_potential(spec, basis, rho_grid, clip_floor)
    if extra_potential is not None:
        local = local + extra_potential
    weights = mobility_values(mobility, rho_grid)
    return 0.5 * basis.weighted_flux_divergence(basis.to_spectral(local), weights)


def drift(
    spec: PotentialSpec,
    mobility: MobilitySpec,
    basis: SpectralBasis,
    coeffs: np.ndarray,
) -> np.ndarray:
    """Deterministic drift 1/2 div(M grad V'(rho)) - alpha_eff bilaplacian(rho).

    Args:
        spec: Potential and alpha.
        mobility: Mobility law.
        basis: Spectral basis.
        coeffs: Cosine coefficients (optionally batched).

    Returns:
        Drift in cosine coefficients with mode 0 exactly zero.

    Raises:
        PositivityViolationError: Singular family on a nonpositive density.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    alpha_eff = effective_alpha(spec, mobility)
    out = nonlinear_drift(spec, mobility, basis, coeffs) - alpha_eff * basis.bilaplacian(coeffs)
    out[..., 0] = 0.0
    return out


def free_energy(spec: PotentialSpec, basis: SpectralBasis, coeffs: np.ndarray):
    """E = integral of V(rho) + alpha |d rho/ds|^2 over [0, 1].

    The potential term uses the collocation mean, the gradient term Parseval.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    rho_grid = basis.to_grid(coeffs)
    require_positive(spec, basis, rho_grid)
    bulk = np.mean(_terms(spec, rho_grid)[0], axis=-1)
    gradient = spec.alpha * np.sum(basis.eigenvalues * coeffs**2, axis=-1)
    energy = bulk + gradient
    return float(energy) if np.ndim(energy) == 0 else energy


def potential_energy(spec: PotentialSpec, basis: SpectralBasis, coeffs: np.ndarray):
    """Integral of V(rho) only; +inf where a singular family is not evaluable."""
    rho_grid = basis.to_grid(np.asarray(coeffs, dtype=float))
    values = _terms(spec, rho_grid)[0]
    if spec.is_singular:
        values = np.where(rho_grid > 0.0, values, np.inf)
    energy = np.mean(values, axis=-1)
    return float(energy) if np.ndim(energy) == 0 else energy


def explicit_stiffness(
    spec: PotentialSpec,
    mobility: MobilitySpec,
    basis: SpectralBasis,
    reference_density: float = 1.0,
) -> float:
    """Largest eigenvalue of the linearized explicit drift at a constant state."""
    rho = max(reference_density, spec.eval_floor * 2.0) if spec.is_singular else reference_density
    curvature = float(_terms(spec, np.asarray(rho))[2])
    m = float(mobility_values(mobility, np.asarray([rho]))[0])
    return 0.5 * m * curvature * float(basis.eigenvalues[-1])


def dissipativity_gap(u_grid: np.ndarray, v_grid: np.ndarray, p: int) -> np.ndarray:
    """<u^-p - v^-p, u - v> as a grid mean; nonpositive for positive u, v."""
    u_grid = np.asarray(u_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    return np.mean((u_grid ** (-p) - v_grid ** (-p)) * (u_grid - v_grid), axis=-1)


# Finite-difference forms of the equivalent drifts on a cell-centred
# zero-flux grid; both are second order, so their gap shrinks like h^2.

def _neumann_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    padded = np.concatenate(([values[0]], values, [values[-1]]))
    return (padded[2:] - 2.0 * values + padded[:-2]) / h**2


def flux_form_drift(rho: np.ndarray, h: float) -> np.ndarray:
    """1/2 d/ds ((1/rho) d/ds (-1/rho^2)) with zero boundary flux."""
    g = -(rho ** -2)
    face_rho = 0.5 * (rho[1:] + rho[:-1])
    flux = np.zeros(rho.size + 1)
    flux[1:-1] = 0.5 * (g[1:] - g[:-1]) / (h * face_rho)
    return (flux[1:] - flux[:-1]) / h


def potential_form_drift(rho: np.ndarray, h: float) -> np.ndarray:
    """-1/3 Laplacian(rho^-3) with zero boundary flux."""
    return -_neumann_laplacian(rho ** -3, h) / 3.0


def drift_equivalence_errors(
    grid_sizes: Sequence[int] = (64, 128, 256, 512),
    profile: Callable[[np.ndarray], np.ndarray] = lambda s: 2.0 + np.cos(np.pi * s),
) -> List[Dict[str, float]]:
    """Max gap between the flux and potential drift forms per grid size.

    Returns:
        One row per grid size with the gap and the reduction factor relative to
        the previous (coarser) size.
    """
    rows: List[Dict[str, float]] = []
    previous = None
    for size in grid_sizes:
        h = 1.0 / size
        s = (np.arange(size) + 0.5) * h
        rho = profile(s)
        if np.any(rho <= 0.0):
            raise DomainError("drift equivalence needs a positive profile")
        gap = float(np.max(np.abs(flux_form_drift(rho, h) - potential_form_drift(rho, h))))
        factor = previous / gap if previous is not None and gap > 0.0 else float("nan")
        rows.append({"grid_size": float(size), "max_gap": gap, "reduction_factor": factor})
        logger.debug(f"drift equivalence G={size}: gap={gap:.3e}")
        previous = gap
    return rows
