"""Wiener increments in the spectral frame.

Every trajectory owns one counter-based Philox stream seeded with
SeedSequence([seed, stream_index]), so batches are reproducible regardless of
how they are scheduled. Normals are drawn in blocks per stream.

Conservative increments are d/ds(amplitude * dW) and never touch mode 0:

    cylindrical / q_diagonal   W = sum_k sqrt(q_k) beta_k(t) f_k(s), sine modes
                               k = 1..min(K_noise, K - 1), q_k = 1 for cylindrical
    scalar                     W = beta(t), constant in space; the bulk sees
                               d/ds a(rho) d beta with the boundary flux removed

The multiplicative amplitude sigma / sqrt(max(rho, floor)) multiplies the
noise pointwise on the grid before the outer divergence.
"""

import logging
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import nnls

from repton.models.reports import TraceBoundReport
from repton.models.specs import AmplitudeKind, NoiseKind, NoiseSpec
from repton.shared_libraries import constants
from repton.shared_libraries.errors import ConfigurationError, UsageError
from repton.shared_libraries.types import DensityField, SineField
from repton.tools.spectral import SpectralBasis

logger = logging.getLogger(__name__)

StateLike = Union[np.ndarray, DensityField, None]


def make_generator(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (seed, stream) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def active_modes(spec: NoiseSpec, basis: SpectralBasis) -> np.ndarray:
    """Mode indices driven by the noise (empty for scalar noise)."""
    if spec.kind == NoiseKind.SCALAR:
        return np.zeros(0, dtype=int)
    if spec.kind == NoiseKind.Q_DIAGONAL:
        count = len(spec.spectrum)
    else:
        count = spec.n_modes if spec.n_modes is not None else basis.n_modes
    count = min(count, basis.n_modes - 1)
    return np.arange(1, count + 1)


def mode_intensities(spec: NoiseSpec, basis: SpectralBasis) -> np.ndarray:
    """Per-mode variance rate s_k of W (length K, zero where inactive)."""
    intensities = np.zeros(basis.n_modes)
    modes = active_modes(spec, basis)
    if spec.kind == NoiseKind.Q_DIAGONAL:
        intensities[modes] = spec.sigma**2 * np.asarray(spec.spectrum[: modes.size])
    else:
        intensities[modes] = spec.sigma**2
    return intensities


class WienerIncrements:
    """Noise source for one trajectory or a batch of trajectories.

    A source built with a single stream returns increments of shape (K,);
    with several streams it returns (B, K) with row i driven by streams[i].
    """

    def __init__(
        self,
        spec: NoiseSpec,
        basis: SpectralBasis,
        seed: int,
        streams: Sequence[int] = (0,),
        block_steps: int = constants.NOISE_BLOCK_STEPS,
    ):
        if not streams:
            raise ConfigurationError("WienerIncrements needs at least one stream")
        self.spec = spec
        self.basis = basis
        self.seed = seed
        self.streams: List[int] = list(streams)
        self._single = len(self.streams) == 1
        self._block_steps = block_steps
        self._generators = [make_generator(seed, s) for s in self.streams]

        self._modes = active_modes(spec, basis)
        if spec.kind == NoiseKind.SCALAR:
            self._scales = np.array([spec.sigma])
        else:
            self._scales = np.sqrt(mode_intensities(spec, basis)[self._modes])
        self.n_raw = int(self._scales.size)

        self._buffer = np.zeros((len(self.streams), 0, self.n_raw))
        self._cursor = 0
        self.last_edge_increments = np.zeros((len(self.streams), 2))

    @property
    def batch_size(self) -> int:
        return len(self.streams)

    def _refill(self) -> None:
        self._buffer = np.stack(
            [g.standard_normal((self._block_steps, self.n_raw)) for g in self._generators]
        )
        self._cursor = 0

    def _draw(self, substeps: int) -> np.ndarray:
        total = np.zeros((self.batch_size, self.n_raw))
        for _ in range(substeps):
            if self._cursor >= self._buffer.shape[1]:
                self._refill()
            total += self._buffer[:, self._cursor, :]
            self._cursor += 1
        if substeps > 1:
            total /= np.sqrt(substeps)
        return total

    def sample_increment(
        self, dt: float, rho: StateLike = None, substeps: int = 1
    ) -> np.ndarray:
        """Spectral increment of d/ds(amplitude dW) over one step.

        Args:
            dt: Step length.
            rho: Current density (coefficients or DensityField); required for
                multiplicative amplitude.
            substeps: Number of consecutive unit normals summed (and rescaled)
                per increment, so a run at 2*dt can share the path of a run
                at dt.

        Returns:
            Cosine coefficients, shape (K,) or (B, K).

        Raises:
            UsageError: Multiplicative amplitude requested without a density.
        """
        if dt <= 0.0:
            raise UsageError(f"dt must be positive, got {dt}")
        rho_coeffs = self._coerce_state(rho)
        z = self._draw(substeps)
        if self.n_raw == 0:
            out = np.zeros((self.batch_size, self.basis.n_modes))
            self.last_edge_increments = np.zeros((self.batch_size, 2))
        else:
            out = self._apply(z * self._scales * np.sqrt(dt), rho_coeffs)
        return out[0] if self._single else out

    def _coerce_state(self, rho: StateLike) -> Optional[np.ndarray]:
        if isinstance(rho, DensityField):
            rho = rho.coeffs
        if self.spec.amplitude == AmplitudeKind.MULTIPLICATIVE_FLOORED and rho is None:
            raise UsageError("multiplicative noise needs the current density")
        return None if rho is None else np.asarray(rho, dtype=float)

    def _amplitude(self, rho_coeffs: Optional[np.ndarray], floor: Optional[float] = None) -> np.ndarray:
        if self.spec.amplitude == AmplitudeKind.ADDITIVE:
            return np.ones(self.basis.n_grid)
        floor = self.spec.floor if floor is None else floor
        rho_grid = np.atleast_2d(self.basis.to_grid(rho_coeffs))
        with np.errstate(divide="ignore"):
            return 1.0 / np.sqrt(np.maximum(rho_grid, floor))

    def _apply(
        self, dw: np.ndarray, rho_coeffs: Optional[np.ndarray], floor: Optional[float] = None
    ) -> np.ndarray:
        """Map W-increment coefficients (B, n_raw) to density increments (B, K)."""
        basis = self.basis
        rows = dw.shape[0]
        multiplicative = self.spec.amplitude == AmplitudeKind.MULTIPLICATIVE_FLOORED

        if self.spec.kind == NoiseKind.SCALAR:
            dbeta = dw[:, :1]
            self.last_edge_increments = np.repeat(dbeta, 2, axis=1)
            if not multiplicative:
                out = np.zeros((rows, basis.n_modes))
                if not self.spec.conservative:
                    out[:, 0] = dbeta[:, 0]
                return out
            flux = basis.to_spectral(self._amplitude(rho_coeffs, floor))
            if self.spec.conservative:
                slope = basis.sine_to_grid(basis.derivative(flux))
                flux = basis.to_spectral(slope)
                flux[..., 0] = 0.0
            return flux * dbeta

        coeffs = np.zeros((rows, basis.n_modes))
        coeffs[:, self._modes] = dw
        if self.spec.conservative:
            self.last_edge_increments = np.zeros((rows, 2))
            if not multiplicative:
                return basis.divergence(SineField(coeffs))
            w_grid = basis.sine_to_grid(SineField(coeffs))
            flux = basis.sine_from_grid(self._amplitude(rho_coeffs, floor) * w_grid)
            return basis.divergence(flux)

        self.last_edge_increments = basis.evaluate(coeffs, [0.0, 1.0])
        if not multiplicative:
            return coeffs
        w_grid = basis.to_grid(coeffs)
        return basis.to_spectral(self._amplitude(rho_coeffs, floor) * w_grid)

    def increment_matrix(
        self, rho: StateLike = None, floor: Optional[float] = None
    ) -> np.ndarray:
        """Linear map from unit normals to the increment per sqrt(dt), shape (K, n_raw).

        `floor` overrides the multiplicative floor (0 gives the unfloored
        amplitude used by checker fixtures).
        """
        rho_coeffs = self._coerce_state(rho)
        if self.n_raw == 0:
            return np.zeros((self.basis.n_modes, 0))
        if rho_coeffs is not None and rho_coeffs.ndim > 1:
            raise UsageError("increment_matrix takes a single density")
        edges = self.last_edge_increments
        matrix = self._apply(np.diag(self._scales), rho_coeffs, floor).T
        self.last_edge_increments = edges
        return matrix

    def ito_trace(self, rho: StateLike = None) -> float:
        """Tr(Q* (-Laplacian) Q) at the truncation: expected |increment|^2 / dt."""
        return float(np.sum(self.increment_matrix(rho) ** 2))


def random_positive_fields(
    basis: SpectralBasis,
    count: int,
    rng: np.random.Generator,
    mass: float = 1.0,
    amplitude: float = 0.3,
) -> np.ndarray:
    """Random fields mass + decaying cosine perturbation, rescaled to stay positive."""
    fields = np.zeros((count, basis.n_modes))
    fields[:, 0] = mass
    if basis.n_modes > 1:
        k = np.arange(1, basis.n_modes)
        fields[:, 1:] = amplitude * rng.standard_normal((count, basis.n_modes - 1)) / k
    grid = basis.to_grid(fields)
    low = np.min(grid, axis=1)
    # shrink the fluctuation where the minimum dips below mass / 4
    scale = np.where(low < 0.25 * mass, 0.75 * mass / (mass - low), 1.0)
    fields[:, 1:] *= scale[:, None]
    return fields


def trace_bound_report(
    spec: NoiseSpec,
    basis: SpectralBasis,
    rho_samples: Optional[np.ndarray] = None,
    n_samples: int = 100,
    seed: int = 0,
) -> TraceBoundReport:
    """Fit Tr(Q*(-Laplacian)Q) <= C_Q1 + C_Q2 |rho|^2 over sample densities.

    The nonnegative least-squares fit is shifted up by the largest positive
    residual so the affine bound holds on every sample.
    """
    source = WienerIncrements(spec, basis, seed=seed)
    if spec.amplitude == AmplitudeKind.ADDITIVE:
        samples = np.atleast_2d(basis.constant(1.0)) if rho_samples is None else np.atleast_2d(rho_samples)
    elif rho_samples is None:
        samples = random_positive_fields(basis, n_samples, make_generator(seed, 0))
    else:
        samples = np.atleast_2d(np.asarray(rho_samples, dtype=float))

    traces = np.array([source.ito_trace(rho) for rho in samples])
    norms_sq = np.sum(samples**2, axis=1)
    design = np.column_stack([np.ones_like(norms_sq), norms_sq])
    coeffs, _ = nnls(design, traces)
    residual = traces - design @ coeffs
    rms = float(np.sqrt(np.mean(residual**2)))
    shift = max(0.0, float(np.max(residual)))
    report = TraceBoundReport(
        c_q1=float(coeffs[0] + shift),
        c_q2=float(coeffs[1]),
        residual_rms=rms,
        n_samples=int(samples.shape[0]),
        trace_min=float(np.min(traces)),
        trace_max=float(np.max(traces)),
    )
    logger.info(
        f"Trace bound: C_Q1={report.c_q1:.4g}, C_Q2={report.c_q2:.4g}, residual={rms:.3g}"
    )
    return report
