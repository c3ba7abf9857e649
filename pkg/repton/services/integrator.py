"""Time stepping of the density-fluctuation SPDE.

One semi-implicit Euler-Maruyama step reads, mode by mode,

    c+ = (c + dt [N(c) + S lambda c] + P(c) + xi) / (1 + dt (alpha_eff lambda^2 + S lambda))

with N the explicit nonlinear drift, S an optional linear stabilization,
P the mean-free penalty source and xi the noise increment. Mode 0 has
lambda = 0 and receives exact zeros from N, P and xi, so the mass is
conserved bit for bit.

The penalty source is dt kappa (delta - rho)_+ on the grid with its mean
removed; its mean is what the reflection ledger records. While the penalty
is active the singular V' is evaluated at max(rho, delta / 2), so a dip
between delta / 2 and delta still feels the full repulsion.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from repton.models.specs import (
    AmplitudeKind,
    InitialCondition,
    ModelSpec,
    NoiseSpec,
    SchemeKind,
    StepperConfig,
)
from repton.shared_libraries import constants
from repton.shared_libraries.errors import (
    BlowUpError,
    BoundaryCollapseError,
    ConfigurationError,
    DomainError,
    PositivityViolationError,
    ReptonError,
)
from repton.shared_libraries.types import (
    BoundaryState,
    DensityField,
    EdgeFlux,
    EnsembleResult,
    Trajectory,
)
from repton.tools import potentials
from repton.tools.noise import WienerIncrements
from repton.tools.spectral import SpectralBasis

logger = logging.getLogger(__name__)

InitialLike = Union[InitialCondition, DensityField, np.ndarray]
Observer = Callable[[int, float, np.ndarray, slice], None]


@dataclass
class StepOutcome:
    """Result of a single step of one trajectory."""
    state: DensityField
    penalty_mass: float
    support: List[int]


class Stepper:
    """Semi-implicit (or fully explicit) stepper for one model/noise/config triple."""

    def __init__(
        self,
        basis: SpectralBasis,
        model: ModelSpec,
        noise: NoiseSpec,
        config: StepperConfig,
        reference_density: float = 1.0,
    ):
        self.basis = basis
        self.model = model
        self.mobility = model.mobility
        self.noise = noise
        self.config = config
        self.dt = config.dt
        self.alpha_eff = potentials.effective_alpha(model, model.mobility)

        lam = basis.eigenvalues
        if config.scheme == SchemeKind.SEMI_IMPLICIT_ALPHA:
            self._divisor = 1.0 + self.dt * (self.alpha_eff * lam**2 + config.stabilization * lam)
            self._explicit_linear = config.stabilization * lam
        else:
            self._divisor = np.ones_like(lam)
            self._explicit_linear = -self.alpha_eff * lam**2

        self._penalty = config.penalty_active
        self._clip = (
            constants.CLIP_FRACTION * config.positivity_floor
            if self._penalty and config.positivity_floor > 0.0
            else None
        )
        self.stability_number = self.check_stability(reference_density)

    def check_stability(self, reference_density: float = 1.0) -> float:
        """dt times the explicit stiffness, discounted by the implicit part.

        Linearized at the reference density, mode k of the semi-implicit
        step is multiplied by

            g_k = (1 + dt (S lambda_k - r_k)) / (1 + dt (alpha_eff lambda_k^2 + S lambda_k)),

        r_k the explicit rate. |g_k| <= 1 exactly when
        dt r_k / (1 + dt (alpha_eff lambda_k^2 / 2 + S lambda_k)) <= 2, which
        is the number returned (maximized over k). Emits a warning above 2.
        """
        lam = self.basis.eigenvalues
        try:
            rate = potentials.explicit_stiffness(
                self.model, self.mobility, self.basis, reference_density
            ) * lam / max(float(lam[-1]), 1e-300)
        except DomainError:
            rate = np.zeros_like(lam)
        if self.config.scheme == SchemeKind.SEMI_IMPLICIT_ALPHA:
            damping = 1.0 + self.dt * (
                self.config.stabilization * lam + 0.5 * self.alpha_eff * lam**2
            )
            number = float(np.max(self.dt * rate / damping))
        else:
            number = float(np.max(self.dt * (rate + self.alpha_eff * lam**2)))
        if number > constants.STABILITY_CONSTANT:
            logger.warning(
                f"dt={self.dt:g} exceeds the explicit stability limit "
                f"(dt * stiffness = {number:.3g} > {constants.STABILITY_CONSTANT:g})"
            )
        return number

    # Initial data

    def prepare_initial(self, initial: InitialLike) -> np.ndarray:
        """Project onto the cosine span and lift dips to twice the positivity floor.

        The lift keeps the mass exactly and only rescales the fluctuation modes,
        so the shape of the data survives; `floor_initial=False` skips it.
        """
        basis = self.basis
        if isinstance(initial, InitialCondition):
            coeffs = basis.constant(initial.mass)
            for k, value in initial.modes.items():
                if k >= basis.n_modes:
                    raise ConfigurationError(
                        f"initial mode {k} exceeds the truncation K={basis.n_modes}"
                    )
                coeffs[k] = value
        elif isinstance(initial, DensityField):
            coeffs = np.array(initial.coeffs, dtype=float)
        else:
            coeffs = np.array(initial, dtype=float)
            if coeffs.shape[-1] == basis.n_grid and coeffs.shape[-1] != basis.n_modes:
                coeffs = basis.to_spectral(coeffs)

        floor = 2.0 * self.config.positivity_floor
        if self._penalty and self.config.floor_initial and floor > 0.0:
            coeffs = self._lift_to_floor(coeffs, floor)
        return coeffs

    def _lift_to_floor(self, coeffs: np.ndarray, floor: float) -> np.ndarray:
        """Shrink the fluctuation modes until min rho = floor; mode 0 is untouched.

        Raises:
            ConfigurationError: A dipping state whose mass does not exceed the floor.
        """
        lowest = np.min(self.basis.to_grid(coeffs), axis=-1)
        below = lowest < floor
        if not np.any(below):
            return coeffs
        mass = np.asarray(coeffs[..., 0])
        if np.any(mass[below] <= floor):
            raise ConfigurationError(
                f"mass {np.min(mass[below]):g} cannot be lifted to twice the "
                f"positivity floor {floor:g}"
            )
        theta = np.where(below, (mass - floor) / np.where(below, mass - lowest, 1.0), 1.0)
        lifted = np.array(coeffs, dtype=float)
        lifted[..., 1:] *= theta[..., None]
        logger.info(
            f"Initial data lifted to min rho = {floor:g}, fluctuations scaled by {np.min(theta):.4g}"
        )
        return lifted

    # Stepping

    def advance(
        self, coeffs: np.ndarray, increment: np.ndarray, step_index: int = 0
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance (optionally batched) coefficients by one step.

        Returns:
            New coefficients, per-trajectory penalty mass and the boolean
            grid mask of cells below the positivity floor.

        Raises:
            BlowUpError: Non-finite or overflowing state.
            PositivityViolationError: Singular family with the penalty off.
        """
        basis = self.basis
        dt = self.dt
        nonlinear = potentials.nonlinear_drift(
            self.model, self.mobility, basis, coeffs, clip_floor=self._clip
        )
        rhs = coeffs + dt * (nonlinear + self._explicit_linear * coeffs)

        penalty_mass = np.zeros(coeffs.shape[:-1])
        support = np.zeros(coeffs.shape[:-1] + (basis.n_grid,), dtype=bool)
        if self._penalty:
            deficit = np.maximum(self.config.positivity_floor - basis.to_grid(coeffs), 0.0)
            support = deficit > 0.0
            if np.any(support):
                source = basis.to_spectral(dt * self.config.penalty_strength * deficit)
                penalty_mass = source[..., 0].copy()
                source[..., 0] = 0.0
                rhs = rhs + source

        updated = (rhs + increment) / self._divisor
        peak = np.max(np.abs(updated)) if updated.size else 0.0
        if not np.isfinite(peak) or peak > constants.BLOW_UP_THRESHOLD:
            raise BlowUpError(step_index, f"max |coefficient| = {peak:.3g}")
        return updated, penalty_mass, support

    def step(
        self, state: Union[DensityField, np.ndarray], noise: WienerIncrements, step_index: int = 0
    ) -> StepOutcome:
        """One step of a single trajectory, returning the field and its ledger entry."""
        coeffs = state.coeffs if isinstance(state, DensityField) else np.asarray(state, dtype=float)
        increment = noise.sample_increment(self.dt, coeffs if self._needs_state() else None)
        updated, mass, support = self.advance(coeffs, increment, step_index)
        return StepOutcome(
            state=self.basis.field(updated),
            penalty_mass=float(mass),
            support=[int(i) for i in np.flatnonzero(support)],
        )

    def _needs_state(self) -> bool:
        return self.noise.amplitude == AmplitudeKind.MULTIPLICATIVE_FLOORED

    # Monitors

    def monitors(self, coeffs: np.ndarray) -> Dict[str, float]:
        """l2_norm, free_energy (inf when not evaluable), min_value and mass."""
        coeffs = np.asarray(coeffs, dtype=float)
        try:
            energy = float(potentials.free_energy(self.model, self.basis, coeffs))
        except DomainError:
            energy = float("inf")
        return {
            "mass": float(coeffs[0]),
            "l2_norm": float(self.basis.l2_norm(coeffs)),
            "free_energy": energy,
            "min_value": float(np.min(self.basis.to_grid(coeffs))),
        }

    # Runs

    def run(
        self,
        initial: InitialLike,
        seed: int = 0,
        stream: int = 0,
        noise: Optional[WienerIncrements] = None,
    ) -> Trajectory:
        """Integrate one trajectory to t_end, recording every `record_every` steps.

        Errors stop the run; the partial trajectory is returned with
        `failed` set and the message in `error`.
        """
        config = self.config
        source = noise or WienerIncrements(self.noise, self.basis, seed, [stream])
        coeffs = self.prepare_initial(initial)
        trajectory = Trajectory()
        boundary = BoundaryState() if config.moving_boundary else None
        cumulative = 0.0
        pending_mass = 0.0
        pending_cells: set = set()

        self._record(trajectory, 0.0, coeffs, cumulative, boundary)
        n_steps = config.n_steps
        for n in range(1, n_steps + 1):
            try:
                flux = self.edge_fluxes(coeffs) if boundary is not None else None
                increment = source.sample_increment(
                    self.dt, coeffs if self._needs_state() else None
                )
                coeffs, mass, support = self.advance(coeffs, increment, n)
                if boundary is not None:
                    boundary = step_boundaries(
                        boundary, flux, self.dt, tuple(source.last_edge_increments[0])
                    )
            except ReptonError as e:
                logger.error(f"Run stopped at step {n}: {e}")
                trajectory.failed = True
                trajectory.error = str(e)
                break
            trajectory.steps_taken = n
            cumulative += float(mass)
            pending_mass += float(mass)
            if float(mass) > 0.0:
                pending_cells.update(int(i) for i in np.flatnonzero(support))
            if n % config.record_every == 0 or n == n_steps:
                t = n * self.dt
                trajectory.ledger.record(t, pending_mass, sorted(pending_cells))
                self._record(trajectory, t, coeffs, cumulative, boundary)
                pending_mass = 0.0
                pending_cells = set()
        return trajectory

    def _record(
        self,
        trajectory: Trajectory,
        t: float,
        coeffs: np.ndarray,
        cumulative: float,
        boundary: Optional[BoundaryState],
    ) -> None:
        trajectory.times.append(t)
        trajectory.states.append(np.array(coeffs))
        trajectory.monitors.append(self.monitors(coeffs))
        trajectory.penalty_mass.append(cumulative)
        if boundary is not None:
            trajectory.boundaries.append(boundary)

    def integrate_batch(
        self,
        coeffs: np.ndarray,
        source: WienerIncrements,
        n_steps: int,
        observer: Optional[Observer] = None,
        observe_every: int = 1,
        rows: Optional[slice] = None,
        substeps: int = 1,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Advance a (B, K) batch for n_steps, returning final states and penalty mass."""
        rows = rows if rows is not None else slice(0, coeffs.shape[0])
        coeffs = np.array(coeffs, dtype=float)
        penalty = np.zeros(coeffs.shape[0])
        if observer is not None:
            observer(0, 0.0, coeffs, rows)
        for n in range(1, n_steps + 1):
            increment = source.sample_increment(
                self.dt, coeffs if self._needs_state() else None, substeps=substeps
            )
            if increment.ndim == 1:
                increment = increment[None, :]
            coeffs, mass, _ = self.advance(coeffs, increment, n)
            penalty += mass
            if observer is not None and n % observe_every == 0:
                observer(n, n * self.dt, coeffs, rows)
        return coeffs, penalty

    def run_ensemble(
        self,
        initial: InitialLike,
        n_trajectories: int,
        seed: int = 0,
        threads: int = 1,
        n_steps: Optional[int] = None,
        observer: Optional[Observer] = None,
        observe_every: int = 1,
        first_stream: int = 0,
        substeps: int = 1,
    ) -> EnsembleResult:
        """Integrate n_trajectories copies of the initial state, one stream each.

        The batch is split into contiguous chunks, one per worker thread;
        results are merged by trajectory index, so the outcome does not
        depend on `threads`.
        """
        n_steps = self.config.n_steps if n_steps is None else n_steps
        start = self.prepare_initial(initial)
        batch = np.broadcast_to(start, (n_trajectories, self.basis.n_modes)).copy()
        streams = list(range(first_stream, first_stream + n_trajectories))
        threads = max(1, min(threads, n_trajectories))
        bounds = np.linspace(0, n_trajectories, threads + 1).astype(int)
        chunks = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

        def work(chunk: slice) -> Tuple[np.ndarray, np.ndarray]:
            source = WienerIncrements(self.noise, self.basis, seed, streams[chunk])
            return self.integrate_batch(
                batch[chunk], source, n_steps, observer, observe_every, chunk, substeps
            )

        logger.info(
            f"Running ensemble of {n_trajectories} trajectories x {n_steps} steps "
            f"on {len(chunks)} thread(s)"
        )
        if len(chunks) == 1:
            results = [work(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(work, chunks))
        return EnsembleResult(
            final_states=np.concatenate([r[0] for r in results]),
            penalty_mass=np.concatenate([r[1] for r in results]),
            steps_taken=n_steps,
            streams=streams,
        )

    # Moving boundary

    def edge_fluxes(self, coeffs: np.ndarray) -> EdgeFlux:
        """Edge densities and chemical-potential slopes of the current state.

        In the Neumann cosine representation mu has zero slope at the edges,
        so only the noise moves the boundaries unless a flux is supplied.
        """
        basis = self.basis
        rho_edges = basis.evaluate(coeffs, [0.0, 1.0])
        mu = potentials.chemical_potential(self.model, basis, coeffs)
        slopes = basis.evaluate_sine(basis.derivative(mu), [0.0, 1.0])
        return EdgeFlux(
            rho_minus=float(rho_edges[0]),
            rho_plus=float(rho_edges[1]),
            dmu_minus=float(slopes[0]),
            dmu_plus=float(slopes[1]),
            noise_amplitude=self.noise.sigma,
        )


def step_boundaries(
    boundary: BoundaryState,
    flux: EdgeFlux,
    dt: float,
    dw: Sequence[float] = (0.0, 0.0),
) -> BoundaryState:
    """Euler-Maruyama step of dL = -(1/rho)[(1/(2 rho)) d_x mu dt + sigma dW / sqrt(rho)].

    Reference-coordinate slopes are converted with the 1/(L_plus - L_minus)
    Jacobian. Both edges use the supplied Wiener increments.

    Raises:
        PositivityViolationError: Nonpositive edge density.
        BoundaryCollapseError: L_minus >= L_plus after the step.
    """
    jacobian = 1.0 / boundary.length
    updated = []
    for index, (rho, slope, noise_step) in enumerate(
        ((flux.rho_minus, flux.dmu_minus, dw[0]), (flux.rho_plus, flux.dmu_plus, dw[1]))
    ):
        if rho <= 0.0:
            raise PositivityViolationError(index, float(index), rho)
        drift_term = slope * jacobian / (2.0 * rho) * dt
        noise_term = flux.noise_amplitude * noise_step / np.sqrt(rho)
        updated.append(-(drift_term + noise_term) / rho)
    new_state = BoundaryState(
        l_minus=boundary.l_minus + updated[0], l_plus=boundary.l_plus + updated[1]
    )
    if new_state.l_minus >= new_state.l_plus:
        raise BoundaryCollapseError(new_state.l_minus, new_state.l_plus)
    return new_state
