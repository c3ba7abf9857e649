"""Tests for potentials, mobilities, free energy and drift."""

import unittest

import numpy as np
import pytest
from dotenv import load_dotenv
from scipy import integrate

from repton.models.specs import (
    MobilityKind,
    MobilitySpec,
    ModelSpec,
    PotentialFamily,
    PotentialSpec,
)
from repton.shared_libraries.errors import DomainError, PositivityViolationError
from repton.tools import potentials
from repton.tools.noise import random_positive_fields
from repton.tools.spectral import SpectralBasis


@pytest.fixture(scope="session", autouse=True)
def load_env():
    load_dotenv()


class TestPotentialFamilies(unittest.TestCase):
    """Values, derivatives and the regularization ladder."""

    def setUp(self):
        super().setUp()
        self.p2 = PotentialSpec(family=PotentialFamily.SINGULAR_P2)
        self.p3 = PotentialSpec(family=PotentialFamily.SINGULAR_P3)

    def test_singular_p2_at_one(self):
        self.assertEqual(potentials.potential_value(self.p2, 1.0), 2.0)
        self.assertEqual(potentials.potential_derivative(self.p2, 1.0), 0.0)
        self.assertEqual(potentials.potential_second_derivative(self.p2, 1.0), 2.0)

    def test_singular_p3_at_one(self):
        self.assertEqual(potentials.potential_value(self.p3, 1.0), 0.5)
        self.assertEqual(potentials.potential_derivative(self.p3, 1.0), -1.0)

    def test_additive_constant_shifts_the_chemical_potential(self):
        spec = PotentialSpec(family=PotentialFamily.SINGULAR_P2, additive_constant=0.5)
        self.assertEqual(potentials.potential_derivative(spec, 1.0), 0.5)

    def test_singular_refuses_nonpositive_arguments(self):
        with self.assertRaises(DomainError):
            potentials.potential_value(self.p2, 0.0)
        with self.assertRaises(DomainError):
            potentials.potential_derivative(self.p3, np.array([1.0, -0.5]))

    def test_regularized_agrees_above_the_threshold(self):
        spec = self.p2.regularized(5)
        r = np.linspace(0.2, 3.0, 50)
        np.testing.assert_array_equal(
            potentials.potential_value(spec, r), potentials.potential_value(self.p2, r)
        )

    def test_regularized_lies_below_the_singular_potential(self):
        r = np.linspace(1e-3, 1.0, 400)
        exact = potentials.potential_value(self.p2, r)
        for n in (1, 2, 5, 10, 50):
            self.assertTrue(np.all(potentials.potential_value(self.p2.regularized(n), r) <= exact))

    def test_regularized_grows_with_n_off_the_domain(self):
        values = [potentials.potential_value(self.p2.regularized(n), -1.0) for n in (1, 2, 5, 10)]
        self.assertEqual(values[0], 6.0)
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))

    def test_regularized_is_convex(self):
        spec = self.p3.regularized(4)
        curvature = potentials.potential_second_derivative(spec, np.linspace(-2.0, 2.0, 100))
        self.assertTrue(np.all(curvature > 0.0))

    def test_polynomial_test_family(self):
        spec = PotentialSpec(family=PotentialFamily.POLYNOMIAL_TEST, curvature=2.0, center=1.0)
        self.assertEqual(potentials.potential_value(spec, 3.0), 4.0)
        self.assertEqual(potentials.potential_derivative(spec, 0.0), -2.0)

    def test_regularized_needs_a_level(self):
        with self.assertRaises(ValueError):
            PotentialSpec(family=PotentialFamily.REGULARIZED)


class TestDriftAndEnergy(unittest.TestCase):
    """Chemical potential, drift and free energy on the spectral basis."""

    def setUp(self):
        super().setUp()
        self.basis = SpectralBasis(8)
        self.model = ModelSpec(family=PotentialFamily.SINGULAR_P2, alpha=0.1)

    def test_free_energy_of_constant_states(self):
        self.assertAlmostEqual(potentials.free_energy(self.model, self.basis, self.basis.constant(1.0)), 2.0)
        self.assertAlmostEqual(potentials.free_energy(self.model, self.basis, self.basis.constant(2.0)), 2.5)

    def test_free_energy_counts_the_gradient_term(self):
        coeffs = self.basis.constant(0.0)
        coeffs[1] = 0.1
        spec = ModelSpec(family=PotentialFamily.POLYNOMIAL_TEST, alpha=0.5)
        self.assertAlmostEqual(
            potentials.free_energy(spec, self.basis, coeffs), 0.5 * np.pi**2 * 0.01
        )

    def test_drift_of_constant_state_vanishes(self):
        out = potentials.drift(self.model, self.model.mobility, self.basis, self.basis.constant(1.5))
        self.assertEqual(out[0], 0.0)
        np.testing.assert_allclose(out, 0.0, atol=1e-10)

    def test_drift_mode_zero_is_exactly_zero_in_batches(self):
        fields = random_positive_fields(self.basis, 5, np.random.default_rng(3))
        out = potentials.drift(self.model, self.model.mobility, self.basis, fields)
        self.assertTrue(np.all(out[:, 0] == 0.0))

    def test_drift_raises_on_negative_density(self):
        coeffs = self.basis.constant(0.1)
        coeffs[1] = 0.5
        with self.assertRaises(PositivityViolationError) as context:
            potentials.drift(self.model, self.model.mobility, self.basis, coeffs)
        self.assertLessEqual(context.exception.value, 1e-8)

    def test_linear_drift_is_minus_alpha_bilaplacian(self):
        spec = ModelSpec(
            family=PotentialFamily.POLYNOMIAL_TEST,
            alpha=0.3,
            mobility=MobilitySpec(kind=MobilityKind.CONSTANT, value=2.0),
        )
        coeffs = self.basis.constant(1.0)
        coeffs[2] = 0.05
        out = potentials.drift(spec, spec.mobility, self.basis, coeffs)
        np.testing.assert_allclose(out, -0.6 * self.basis.bilaplacian(coeffs), atol=1e-10)

    def test_effective_alpha_and_temperature(self):
        mobility = MobilitySpec(kind=MobilityKind.CONSTANT, value=2.0)
        self.assertEqual(potentials.effective_alpha(self.model, mobility), 0.2)
        self.assertEqual(potentials.effective_alpha(self.model, MobilitySpec()), 0.1)
        self.assertEqual(potentials.gibbs_temperature(1.0, mobility), 0.5)

    def test_inverse_mobility_uses_the_floor(self):
        values = potentials.mobility_values(MobilitySpec(floor=0.5), np.array([0.1, 2.0]))
        np.testing.assert_allclose(values, [2.0, 0.5])

    def test_potential_energy_is_infinite_off_the_domain(self):
        coeffs = self.basis.constant(-1.0)
        self.assertEqual(potentials.potential_energy(self.model, self.basis, coeffs), np.inf)


class TestDriftForms(unittest.TestCase):
    """Dissipativity and the two equivalent drift discretizations."""

    def test_dissipativity_gap_is_nonpositive(self):
        rng = np.random.default_rng(11)
        u = rng.uniform(0.1, 3.0, (20, 32))
        v = rng.uniform(0.1, 3.0, (20, 32))
        for p in (2, 3):
            self.assertTrue(np.all(potentials.dissipativity_gap(u, v, p) <= 0.0))

    def test_gap_between_drift_forms_shrinks_quadratically(self):
        rows = potentials.drift_equivalence_errors([64, 128, 256, 512])
        self.assertEqual(len(rows), 4)
        self.assertTrue(np.isnan(rows[0]["reduction_factor"]))
        for row in rows[1:]:
            self.assertAlmostEqual(row["reduction_factor"], 4.0, delta=0.8)

    def test_drift_forms_reject_nonpositive_profiles(self):
        with self.assertRaises(DomainError):
            potentials.drift_equivalence_errors([16], profile=lambda s: np.cos(np.pi * s))


class TestQuadrature(unittest.TestCase):
    def test_potential_energy_matches_adaptive_quadrature(self):
        basis = SpectralBasis(32)
        coeffs = basis.constant(2.0)
        coeffs[1] = 1.0 / np.sqrt(2.0)
        for family in (PotentialFamily.SINGULAR_P2, PotentialFamily.SINGULAR_P3):
            spec = PotentialSpec(family=family)
            expected, _ = integrate.quad(
                lambda s: potentials.potential_value(spec, 2.0 + np.cos(np.pi * s)), 0.0, 1.0
            )
            self.assertAlmostEqual(potentials.potential_energy(spec, basis, coeffs), expected, places=10)

    def test_free_energy_matches_adaptive_quadrature(self):
        basis = SpectralBasis(32)
        coeffs = basis.constant(2.0)
        coeffs[1] = 1.0 / np.sqrt(2.0)
        for family in (PotentialFamily.SINGULAR_P2, PotentialFamily.SINGULAR_P3):
            spec = ModelSpec(family=family, alpha=0.1)

            def density(s):
                rho = 2.0 + np.cos(np.pi * s)
                slope = -np.pi * np.sin(np.pi * s)
                return potentials.potential_value(spec, rho) + 0.1 * slope**2

            expected, _ = integrate.quad(density, 0.0, 1.0, epsabs=1e-12)
            self.assertAlmostEqual(potentials.free_energy(spec, basis, coeffs), expected, places=8)


class TestFiniteDifferenceOracle(unittest.TestCase):
    """Chemical potential against central differences on a 4096-point grid."""

    def setUp(self):
        super().setUp()
        self.points = (np.arange(4096) + 0.5) / 4096
        self.h = 1.0 / 4096

    def second_difference(self, values):
        return (values[2:] - 2.0 * values[1:-1] + values[:-2]) / self.h**2

    def test_quadratic_potential(self):
        basis = SpectralBasis(8)
        spec = ModelSpec(family=PotentialFamily.POLYNOMIAL_TEST, alpha=0.1, curvature=2.0)
        coeffs = 0.5 / np.arange(1, 9) ** 2
        coeffs[0] = 1.0
        rho = basis.evaluate(coeffs, self.points)
        oracle = 2.0 * (rho[1:-1] - 1.0) - 0.2 * self.second_difference(rho)
        mu = basis.evaluate(potentials.chemical_potential(spec, basis, coeffs), self.points[1:-1])
        np.testing.assert_allclose(mu, oracle, atol=1e-4)

    def test_singular_potential(self):
        basis = SpectralBasis(32)
        coeffs = basis.constant(2.0)
        coeffs[1] = 1.0 / np.sqrt(2.0)
        for family in (PotentialFamily.SINGULAR_P2, PotentialFamily.SINGULAR_P3):
            spec = ModelSpec(family=family, alpha=0.05)
            rho = 2.0 + np.cos(np.pi * self.points)
            oracle = potentials.potential_derivative(spec, rho[1:-1]) - 0.1 * self.second_difference(rho)
            mu = basis.evaluate(potentials.chemical_potential(spec, basis, coeffs), self.points[1:-1])
            np.testing.assert_allclose(mu, oracle, atol=1e-5)


class TestGradientFlowStructure(unittest.TestCase):
    """With constant mobility m the drift is m/2 Laplacian of the free-energy gradient."""

    def test_directional_derivative_of_the_free_energy(self):
        basis = SpectralBasis(16)
        mobility = MobilitySpec(kind=MobilityKind.CONSTANT, value=2.0)
        rng = np.random.default_rng(21)
        for family in (PotentialFamily.SINGULAR_P2, PotentialFamily.SINGULAR_P3):
            spec = ModelSpec(family=family, alpha=0.05, mobility=mobility)
            coeffs = basis.constant(1.5)
            coeffs[1:] = 0.05 * rng.standard_normal(15) / np.arange(1, 16)
            direction = np.zeros(16)
            direction[1:] = rng.standard_normal(15) / np.arange(1, 16)
            eps = 1e-5
            slope = (
                potentials.free_energy(spec, basis, coeffs + eps * direction)
                - potentials.free_energy(spec, basis, coeffs - eps * direction)
            ) / (2.0 * eps)
            drift = potentials.drift(spec, mobility, basis, coeffs)
            pairing = float(basis.hminus1_inner(drift, direction))
            self.assertEqual(np.sign(pairing), -np.sign(slope))
            self.assertAlmostEqual(slope, -(2.0 / mobility.value) * pairing, delta=1e-6)

    def test_drift_is_the_laplacian_of_the_chemical_potential(self):
        basis = SpectralBasis(16)
        mobility = MobilitySpec(kind=MobilityKind.CONSTANT, value=0.5)
        spec = ModelSpec(family=PotentialFamily.SINGULAR_P3, alpha=0.2, mobility=mobility)
        coeffs = basis.constant(1.0)
        coeffs[2] = 0.1
        coeffs[5] = -0.03
        expected = 0.25 * basis.laplacian(potentials.chemical_potential(spec, basis, coeffs))
        expected[0] = 0.0
        np.testing.assert_allclose(potentials.drift(spec, mobility, basis, coeffs), expected, atol=1e-9)
