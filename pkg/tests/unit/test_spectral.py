"""Tests for the cosine spectral basis."""

import unittest

import numpy as np
import pytest
from dotenv import load_dotenv

from repton.shared_libraries.errors import ConfigurationError, PreconditionError
from repton.tools.spectral import SpectralBasis


@pytest.fixture(scope="session", autouse=True)
def load_env():
    load_dotenv()


class TestSpectralBasis(unittest.TestCase):
    """Transforms, operators and norms on the Neumann cosine basis."""

    def setUp(self):
        super().setUp()
        self.basis = SpectralBasis(8)
        self.rng = np.random.default_rng(7)

    def test_grid_is_cell_centred(self):
        self.assertEqual(self.basis.n_grid, 16)
        np.testing.assert_allclose(self.basis.grid, (np.arange(16) + 0.5) / 16)

    def test_transform_is_exact_on_the_span(self):
        coeffs = self.rng.standard_normal((3, 8))
        back = self.basis.to_spectral(self.basis.to_grid(coeffs))
        np.testing.assert_allclose(back, coeffs, atol=1e-13)

    def test_round_trip_at_large_truncation(self):
        for oversampling in (2, 3):
            basis = SpectralBasis(64, oversampling=oversampling)
            coeffs = self.rng.standard_normal((4, 64))
            back = basis.to_spectral(basis.to_grid(coeffs))
            self.assertLess(np.max(np.abs(back - coeffs)), 1e-12)

    def test_derivative_matches_a_fine_finite_difference(self):
        coeffs = 0.5 / np.arange(1, 9) ** 2
        coeffs[0] = 1.0
        points = (np.arange(4096) + 0.5) / 4096
        values = self.basis.evaluate(coeffs, points)
        oracle = np.gradient(values, points, edge_order=2)
        slope = self.basis.evaluate_sine(self.basis.derivative(coeffs), points)
        np.testing.assert_allclose(slope, oracle, atol=2e-5)

    def test_grid_matches_pointwise_evaluation(self):
        coeffs = self.rng.standard_normal(8)
        np.testing.assert_allclose(
            self.basis.to_grid(coeffs), self.basis.evaluate(coeffs, self.basis.grid), atol=1e-13
        )

    def test_divergence_of_derivative_is_laplacian(self):
        coeffs = self.rng.standard_normal(8)
        composed = self.basis.divergence(self.basis.derivative(coeffs))
        np.testing.assert_allclose(composed, self.basis.laplacian(coeffs), atol=1e-10)
        self.assertEqual(composed[0], 0.0)

    def test_weighted_flux_divergence_with_unit_weights(self):
        coeffs = self.rng.standard_normal(8)
        weighted = self.basis.weighted_flux_divergence(coeffs, np.ones(16))
        np.testing.assert_allclose(weighted, self.basis.laplacian(coeffs), atol=1e-9)

    def test_constant_field_has_unit_l2_norm(self):
        self.assertAlmostEqual(float(self.basis.l2_norm(self.basis.constant(1.0))), 1.0)
        field = self.basis.field(self.basis.constant(2.5))
        self.assertEqual(field.mass, 2.5)
        self.assertTrue(field.positive)

    def test_hminus1_of_first_mode(self):
        coeffs = np.zeros(8)
        coeffs[1] = 1.0
        self.assertAlmostEqual(float(self.basis.hminus1_norm_sq(coeffs)), 1.0 / np.pi**2)

    def test_hminus1_requires_zero_mean(self):
        with self.assertRaises(PreconditionError):
            self.basis.hminus1_inner(self.basis.constant(1.0), np.zeros(8))

    def test_mean_tolerance_does_not_grow_with_the_amplitude(self):
        coeffs = np.zeros(8)
        coeffs[1] = 1e6
        coeffs[0] = 1e-9
        with self.assertRaises(PreconditionError):
            self.basis.hminus1_norm_sq(coeffs)
        coeffs[0] = 1e-11
        self.assertAlmostEqual(float(self.basis.hminus1_norm_sq(coeffs)) / 1e12, 1.0 / np.pi**2)

    def test_v_norms_are_dual(self):
        coeffs = np.zeros(8)
        coeffs[2] = 1.0
        lam = self.basis.eigenvalues[2]
        self.assertAlmostEqual(float(self.basis.v_norm(coeffs)), np.sqrt(1.0 + lam))
        self.assertAlmostEqual(float(self.basis.v_dual_norm(coeffs)), 1.0 / np.sqrt(1.0 + lam))

    def test_precomputed_arrays_are_read_only(self):
        with self.assertRaises(ValueError):
            self.basis.eigenvalues[1] = 0.0

    def test_grid_smaller_than_modes_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            SpectralBasis(8, n_grid=4)

    def test_wrong_coefficient_length_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            self.basis.to_grid(np.zeros(5))
