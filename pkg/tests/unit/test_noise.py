"""Tests for the seeded Wiener increments."""

import unittest

import numpy as np
import pytest
from dotenv import load_dotenv
from scipy import stats

from repton.models.specs import AmplitudeKind, NoiseKind, NoiseSpec
from repton.shared_libraries.errors import UsageError
from repton.tools.noise import (
    WienerIncrements,
    active_modes,
    mode_intensities,
    random_positive_fields,
    trace_bound_report,
)
from repton.tools.spectral import SpectralBasis


@pytest.fixture(scope="session", autouse=True)
def load_env():
    load_dotenv()


class TestWienerIncrements(unittest.TestCase):
    """Streams, shapes and the structure of conservative increments."""

    def setUp(self):
        super().setUp()
        self.basis = SpectralBasis(8)
        self.spec = NoiseSpec(kind=NoiseKind.CYLINDRICAL, sigma=0.7)

    def draw(self, source, count, dt=1e-3, substeps=1):
        return np.stack([source.sample_increment(dt, substeps=substeps) for _ in range(count)])

    def test_same_seed_and_stream_repeat(self):
        a = self.draw(WienerIncrements(self.spec, self.basis, seed=5, streams=[2]), 300)
        b = self.draw(WienerIncrements(self.spec, self.basis, seed=5, streams=[2]), 300)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        a = self.draw(WienerIncrements(self.spec, self.basis, seed=5, streams=[0]), 10)
        b = self.draw(WienerIncrements(self.spec, self.basis, seed=5, streams=[1]), 10)
        self.assertFalse(np.array_equal(a, b))

    def test_batch_rows_follow_their_streams(self):
        batch = WienerIncrements(self.spec, self.basis, seed=9, streams=[0, 1, 2])
        single = WienerIncrements(self.spec, self.basis, seed=9, streams=[1])
        for _ in range(3):
            rows = batch.sample_increment(1e-3)
            self.assertEqual(rows.shape, (3, 8))
            np.testing.assert_array_equal(rows[1], single.sample_increment(1e-3))

    def test_conservative_increments_keep_the_mass(self):
        increments = self.draw(WienerIncrements(self.spec, self.basis, seed=1), 50)
        self.assertTrue(np.all(increments[:, 0] == 0.0))

    def test_scalar_additive_conservative_noise_vanishes(self):
        spec = NoiseSpec(kind=NoiseKind.SCALAR, sigma=1.0)
        source = WienerIncrements(spec, self.basis, seed=1)
        np.testing.assert_array_equal(source.sample_increment(1e-2), np.zeros(8))
        self.assertEqual(source.last_edge_increments.shape, (1, 2))

    def test_multiplicative_noise_needs_the_density(self):
        spec = NoiseSpec(amplitude=AmplitudeKind.MULTIPLICATIVE_FLOORED)
        source = WienerIncrements(spec, self.basis, seed=1)
        with self.assertRaises(UsageError):
            source.sample_increment(1e-3)
        increment = source.sample_increment(1e-3, rho=self.basis.constant(1.0))
        self.assertEqual(increment[0], 0.0)

    def test_nonpositive_dt_is_rejected(self):
        source = WienerIncrements(self.spec, self.basis, seed=1)
        with self.assertRaises(UsageError):
            source.sample_increment(0.0)

    def test_substeps_reproduce_the_finer_path(self):
        coarse = WienerIncrements(self.spec, self.basis, seed=4)
        fine = WienerIncrements(self.spec, self.basis, seed=4)
        dt = 2e-3
        for _ in range(20):
            joined = coarse.sample_increment(dt, substeps=2)
            halves = fine.sample_increment(dt / 2) + fine.sample_increment(dt / 2)
            np.testing.assert_allclose(joined, halves, atol=1e-14)

    def test_ito_trace_of_cylindrical_noise(self):
        source = WienerIncrements(self.spec, self.basis, seed=0)
        expected = 0.49 * float(np.sum(self.basis.eigenvalues[1:]))
        self.assertAlmostEqual(source.ito_trace(), expected, places=8)

    def test_empirical_increment_variance(self):
        source = WienerIncrements(self.spec, self.basis, seed=3)
        dt = 1e-2
        increments = self.draw(source, 4000, dt=dt)
        expected = 0.49 * self.basis.eigenvalues[1:] * dt
        np.testing.assert_allclose(np.var(increments[:, 1:], axis=0) / expected, 1.0, atol=0.15)

    def test_q_diagonal_intensities(self):
        spec = NoiseSpec(kind=NoiseKind.Q_DIAGONAL, sigma=2.0, spectrum=[1.0, 0.5])
        np.testing.assert_array_equal(active_modes(spec, self.basis), [1, 2])
        np.testing.assert_allclose(mode_intensities(spec, self.basis), [0, 4, 2, 0, 0, 0, 0, 0])

    def test_noise_truncation(self):
        spec = NoiseSpec(n_modes=3)
        np.testing.assert_array_equal(active_modes(spec, self.basis), [1, 2, 3])
        np.testing.assert_array_equal(active_modes(NoiseSpec(n_modes=50), self.basis), np.arange(1, 8))


class TestIncrementStatistics(unittest.TestCase):
    """Gaussianity and independence of the normalized increments over 1e5 steps."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        basis = SpectralBasis(8)
        spec = NoiseSpec(kind=NoiseKind.CYLINDRICAL, sigma=0.7)
        cls.count = 100000
        cls.dt = 1e-3
        scale = np.sqrt(0.49 * basis.eigenvalues[1:] * cls.dt)
        batch = WienerIncrements(spec, basis, seed=13, streams=[0, 1])
        draws = np.stack([batch.sample_increment(cls.dt) for _ in range(cls.count)])
        cls.z = draws[:, 0, 1:] / scale
        cls.other = draws[:, 1, 1:] / scale
        cls.bound = 5.0 / np.sqrt(cls.count)

    def test_modes_are_standard_normal(self):
        for k in range(self.z.shape[1]):
            column = self.z[:, k]
            self.assertGreater(stats.kstest(column, "norm").pvalue, 1e-4)
            self.assertGreater(stats.normaltest(column).pvalue, 1e-4)
            self.assertAlmostEqual(np.var(column), 1.0, delta=0.02)

    def test_modes_are_uncorrelated(self):
        correlation = np.corrcoef(self.z, rowvar=False)
        off_diagonal = correlation[~np.eye(correlation.shape[0], dtype=bool)]
        self.assertLess(np.max(np.abs(off_diagonal)), self.bound)

    def test_steps_are_uncorrelated(self):
        for lag in range(1, 6):
            for k in range(self.z.shape[1]):
                r = np.corrcoef(self.z[:-lag, k], self.z[lag:, k])[0, 1]
                self.assertLess(abs(r), self.bound)

    def test_streams_are_uncorrelated(self):
        for k in range(self.z.shape[1]):
            r = np.corrcoef(self.z[:, k], self.other[:, k])[0, 1]
            self.assertLess(abs(r), self.bound)


class TestTraceBound(unittest.TestCase):
    """Affine bound on the Ito trace."""

    def setUp(self):
        super().setUp()
        self.basis = SpectralBasis(6)

    def test_bound_holds_on_every_sample(self):
        spec = NoiseSpec(amplitude=AmplitudeKind.MULTIPLICATIVE_FLOORED, sigma=0.5)
        samples = random_positive_fields(self.basis, 30, np.random.default_rng(2))
        report = trace_bound_report(spec, self.basis, rho_samples=samples)
        source = WienerIncrements(spec, self.basis, seed=0)
        for rho in samples:
            bound = report.c_q1 + report.c_q2 * float(np.sum(rho**2))
            self.assertGreaterEqual(bound * (1.0 + 1e-12), source.ito_trace(rho))
        self.assertGreaterEqual(report.c_q2, 0.0)
        self.assertEqual(report.n_samples, 30)

    def test_additive_trace_is_constant(self):
        report = trace_bound_report(NoiseSpec(sigma=1.0), self.basis)
        self.assertAlmostEqual(report.trace_min, report.trace_max)
        self.assertAlmostEqual(report.trace_min, float(np.sum(self.basis.eigenvalues[1:])), places=8)
