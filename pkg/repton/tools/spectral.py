"""Neumann-cosine spectral representation on the reference domain [0, 1].

Fields are expanded in the L2(0, 1)-orthonormal cosine basis

    e_0 = 1,  e_k(s) = sqrt(2) cos(k pi s),  lambda_k = (k pi)^2,

and evaluated on G cell-centred collocation points s_j = (j + 1/2) / G. On
that grid the cosine and sine columns are discretely orthonormal for every
mode below G, so the analysis matrices are the transposed synthesis matrices
scaled by 1/G and the forward/inverse pair is exact on the span.

Derivatives map cosine modes to sine modes f_k = sqrt(2) sin(k pi s) and
back. Sine intermediates are returned as `SineField` and never appear in a
public density.
"""

import logging
from typing import Optional, Union

import numpy as np

from repton.shared_libraries import constants
from repton.shared_libraries.errors import ConfigurationError, PreconditionError
from repton.shared_libraries.types import DensityField, SineField

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, list]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class SpectralBasis:
    """Dense precomputed cosine/sine transforms for K modes on G points."""

    def __init__(
        self, n_modes: int, n_grid: Optional[int] = None, oversampling: int = 2
    ):
        if n_modes < 1:
            raise ConfigurationError(f"n_modes must be positive, got {n_modes}")
        if n_grid is None:
            n_grid = oversampling * n_modes
        if n_grid < n_modes:
            raise ConfigurationError(
                f"Grid size G={n_grid} must be at least the number of modes K={n_modes}"
            )

        self.n_modes = n_modes
        self.n_grid = n_grid

        k = np.arange(n_modes)
        self.wavenumbers = _frozen(k * np.pi)
        self.eigenvalues = _frozen(self.wavenumbers**2)
        self.grid = _frozen((np.arange(n_grid) + 0.5) / n_grid)

        cos_cols = self._cosine_columns(self.grid)
        sin_cols = self._sine_columns(self.grid)
        self._cos_synthesis = _frozen(np.ascontiguousarray(cos_cols.T))
        self._cos_analysis = _frozen(cos_cols / n_grid)
        self._sin_synthesis = _frozen(np.ascontiguousarray(sin_cols.T))
        self._sin_analysis = _frozen(sin_cols / n_grid)

        logger.debug(f"SpectralBasis initialized with K={n_modes}, G={n_grid}")

    def _cosine_columns(self, points: np.ndarray) -> np.ndarray:
        cols = np.sqrt(2.0) * np.cos(np.outer(points, self.wavenumbers))
        cols[:, 0] = 1.0
        return cols

    def _sine_columns(self, points: np.ndarray) -> np.ndarray:
        cols = np.sqrt(2.0) * np.sin(np.outer(points, self.wavenumbers))
        cols[:, 0] = 0.0
        return cols

    def _check_modes(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n_modes:
            raise ConfigurationError(
                f"Expected {self.n_modes} coefficients, got {coeffs.shape[-1]}"
            )
        return coeffs

    # Transforms

    def to_spectral(self, grid_values: ArrayLike) -> np.ndarray:
        """Least-squares cosine coefficients of grid values.

        Args:
            grid_values: Array whose last axis has length G.

        Returns:
            Coefficients with last axis of length K.

        Raises:
            ConfigurationError: If the last axis is not of length G.
        """
        values = np.asarray(grid_values, dtype=float)
        if values.shape[-1] != self.n_grid:
            raise ConfigurationError(
                f"Expected {self.n_grid} grid values, got {values.shape[-1]}"
            )
        return values @ self._cos_analysis

    def to_grid(self, coeffs: ArrayLike) -> np.ndarray:
        """Evaluate cosine coefficients on the collocation grid."""
        return self._check_modes(np.asarray(coeffs)) @ self._cos_synthesis

    def field(self, coeffs: ArrayLike) -> DensityField:
        coeffs = self._check_modes(np.asarray(coeffs, dtype=float)).copy()
        return DensityField(coeffs=coeffs, grid_values=self.to_grid(coeffs))

    def field_from_grid(self, grid_values: ArrayLike) -> DensityField:
        """Project grid values onto the span and return the consistent field."""
        return self.field(self.to_spectral(grid_values))

    def constant(self, value: float) -> np.ndarray:
        coeffs = np.zeros(self.n_modes)
        coeffs[0] = value
        return coeffs

    def evaluate(self, coeffs: ArrayLike, points: ArrayLike) -> np.ndarray:
        """Evaluate a cosine series at arbitrary points of [0, 1]."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        return self._check_modes(np.asarray(coeffs)) @ self._cosine_columns(points).T

    def evaluate_sine(self, sine: SineField, points: ArrayLike) -> np.ndarray:
        points = np.atleast_1d(np.asarray(points, dtype=float))
        return np.asarray(sine.coeffs) @ self._sine_columns(points).T

    # Differential operators

    def derivative(self, coeffs: ArrayLike) -> SineField:
        """d/ds: cosine mode k becomes sine mode k with factor -k pi."""
        return SineField(coeffs=-self.wavenumbers * self._check_modes(np.asarray(coeffs)))

    def divergence(self, sine: SineField) -> np.ndarray:
        """d/ds of a sine field: sine mode k becomes cosine mode k with factor k pi.

        The mode-0 coefficient of the result is exactly zero.
        """
        out = self.wavenumbers * np.asarray(sine.coeffs, dtype=float)
        out[..., 0] = 0.0
        return out

    def laplacian(self, coeffs: ArrayLike) -> np.ndarray:
        return -self.eigenvalues * self._check_modes(np.asarray(coeffs))

    def bilaplacian(self, coeffs: ArrayLike) -> np.ndarray:
        return self.eigenvalues**2 * self._check_modes(np.asarray(coeffs))

    def sine_to_grid(self, sine: SineField) -> np.ndarray:
        return np.asarray(sine.coeffs) @ self._sin_synthesis

    def sine_from_grid(self, grid_values: ArrayLike) -> SineField:
        values = np.asarray(grid_values, dtype=float)
        if values.shape[-1] != self.n_grid:
            raise ConfigurationError(
                f"Expected {self.n_grid} grid values, got {values.shape[-1]}"
            )
        return SineField(coeffs=values @ self._sin_analysis)

    def weighted_flux_divergence(
        self, coeffs: ArrayLike, weights: ArrayLike
    ) -> np.ndarray:
        """d/ds (w * d/ds f) with the product formed pointwise on the grid."""
        slope = self.sine_to_grid(self.derivative(coeffs))
        return self.divergence(self.sine_from_grid(np.asarray(weights) * slope))

    # Geometry

    def l2_inner(self, f: ArrayLike, g: ArrayLike) -> np.ndarray:
        return np.sum(np.asarray(f) * np.asarray(g), axis=-1)

    def l2_norm(self, coeffs: ArrayLike) -> np.ndarray:
        """L2(0, 1) norm through Parseval."""
        return np.sqrt(self.l2_inner(coeffs, coeffs))

    def _check_mean_zero(self, coeffs: np.ndarray, name: str) -> None:
        if np.any(np.abs(coeffs[..., 0]) > constants.MEAN_ZERO_TOLERANCE):
            raise PreconditionError(
                f"{name} must have zero mean for the H^-1 product "
                f"(mode-0 coefficient {np.max(np.abs(coeffs[..., 0])):.3g})"
            )

    def hminus1_inner(self, f: ArrayLike, g: ArrayLike) -> np.ndarray:
        """sum_{k>=1} f_k g_k / lambda_k on mean-zero fields.

        Raises:
            PreconditionError: If either argument has a nonzero mean.
        """
        f = self._check_modes(np.asarray(f))
        g = self._check_modes(np.asarray(g))
        self._check_mean_zero(f, "f")
        self._check_mean_zero(g, "g")
        if self.n_modes == 1:
            return np.zeros(np.broadcast_shapes(f.shape, g.shape)[:-1])
        return np.sum(f[..., 1:] * g[..., 1:] / self.eigenvalues[1:], axis=-1)

    def hminus1_norm_sq(self, f: ArrayLike) -> np.ndarray:
        return self.hminus1_inner(f, f)

    def v_norm(self, coeffs: ArrayLike) -> np.ndarray:
        """H1 norm with weights 1 + lambda_k."""
        coeffs = np.asarray(coeffs)
        return np.sqrt(np.sum((1.0 + self.eigenvalues) * coeffs**2, axis=-1))

    def v_dual_norm(self, coeffs: ArrayLike) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        return np.sqrt(np.sum(coeffs**2 / (1.0 + self.eigenvalues), axis=-1))
