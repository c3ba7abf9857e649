"""Tests for pathwise contraction and the mixing diagnostic."""

import unittest

import numpy as np
import pytest
from dotenv import load_dotenv

from repton.models.experiment import CheckNorm
from repton.models.reports import Verdict
from repton.models.specs import (
    AmplitudeKind,
    InitialCondition,
    MobilityKind,
    MobilitySpec,
    ModelSpec,
    NoiseSpec,
    PotentialFamily,
    StepperConfig,
)
from repton.services.assumptions import linear_fixture, sector_constant
from repton.services.contraction import contraction_experiment, linear_decay_rate
from repton.services.integrator import Stepper
from repton.services.mixing import mixing_diagnostic
from repton.shared_libraries.errors import PreconditionError
from repton.tools.observables import make_observable
from repton.tools.spectral import SpectralBasis


@pytest.fixture(scope="session", autouse=True)
def load_env():
    load_dotenv()


CONSTANT = MobilitySpec(kind=MobilityKind.CONSTANT, value=1.0)


class TestContraction(unittest.TestCase):
    """Two solutions on one noise path."""

    def setUp(self):
        super().setUp()
        self.basis = SpectralBasis(8)
        self.noise = NoiseSpec(sigma=0.1)
        self.p3 = ModelSpec(family=PotentialFamily.SINGULAR_P3, alpha=0.05, mobility=CONSTANT)

    def test_singular_distance_never_increases(self):
        stepper = Stepper(self.basis, self.p3, self.noise, StepperConfig(dt=2e-5, t_end=0.01))
        report, series = contraction_experiment(
            stepper, InitialCondition(), InitialCondition(modes={1: 0.2}), seed=5
        )
        self.assertEqual(report.n_steps, 500)
        self.assertEqual(series.size, 501)
        self.assertLessEqual(report.max_upward_step, 1e-10)
        self.assertLess(report.final_distance, report.initial_distance)
        self.assertIsNone(report.expected_rate)
        self.assertEqual(report.verdict, Verdict.PASS)

    def test_identical_initial_data_give_identical_paths(self):
        stepper = Stepper(self.basis, self.p3, self.noise, StepperConfig(dt=2e-5, t_end=4e-3))
        initial = InitialCondition(modes={1: 0.2, 2: -0.1})
        report, series = contraction_experiment(stepper, initial, initial, seed=5)
        self.assertTrue(report.identical_paths)
        self.assertTrue(np.all(series == 0.0))
        self.assertEqual(report.verdict, Verdict.PASS)

    def test_linear_model_decays_at_the_predicted_rate(self):
        model = ModelSpec(family=PotentialFamily.POLYNOMIAL_TEST, alpha=0.05, mobility=CONSTANT)
        stepper = Stepper(self.basis, model, self.noise, StepperConfig(dt=1e-4, t_end=0.1))
        report, _ = contraction_experiment(
            stepper, InitialCondition(), InitialCondition(modes={1: 0.2}), seed=1
        )
        self.assertAlmostEqual(report.expected_rate, 0.05 * np.pi**4)
        self.assertAlmostEqual(report.fitted_rate, report.expected_rate, delta=0.02 * report.expected_rate)
        self.assertEqual(report.verdict, Verdict.PASS)

    def test_decay_rate_needs_a_single_mode(self):
        model = ModelSpec(family=PotentialFamily.POLYNOMIAL_TEST, alpha=0.05, curvature=2.0, mobility=CONSTANT)
        stepper = Stepper(self.basis, model, self.noise, StepperConfig())
        difference = np.zeros(8)
        difference[2] = 0.1
        lam = (2.0 * np.pi) ** 2
        self.assertAlmostEqual(linear_decay_rate(stepper, difference), lam + 0.05 * lam**2)
        difference[3] = 0.1
        self.assertIsNone(linear_decay_rate(stepper, difference))

    def test_different_masses_are_refused(self):
        stepper = Stepper(self.basis, self.p3, self.noise, StepperConfig(t_end=1e-3))
        with self.assertRaises(PreconditionError):
            contraction_experiment(stepper, InitialCondition(mass=1.0), InitialCondition(mass=2.0))

    def test_multiplicative_noise_is_refused(self):
        noise = NoiseSpec(amplitude=AmplitudeKind.MULTIPLICATIVE_FLOORED)
        stepper = Stepper(self.basis, self.p3, noise, StepperConfig(t_end=1e-3))
        with self.assertRaises(PreconditionError):
            contraction_experiment(stepper, InitialCondition(), InitialCondition(modes={1: 0.1}))

    def test_zero_alpha_is_refused(self):
        model = ModelSpec(family=PotentialFamily.SINGULAR_P3, alpha=0.0, mobility=CONSTANT)
        stepper = Stepper(self.basis, model, self.noise, StepperConfig(t_end=1e-3))
        with self.assertRaises(PreconditionError):
            contraction_experiment(stepper, InitialCondition(), InitialCondition(modes={1: 0.1}))


class TestMixing(unittest.TestCase):
    """Exponential decay of observable gaps under common random numbers."""

    def setUp(self):
        super().setUp()
        self.alpha = 0.05
        self.basis = SpectralBasis(6)
        model = ModelSpec(family=PotentialFamily.POLYNOMIAL_TEST, alpha=self.alpha, mobility=CONSTANT)
        self.stepper = Stepper(self.basis, model, NoiseSpec(sigma=0.1), StepperConfig(dt=1e-3, t_end=0.5))
        self.constant = sector_constant(linear_fixture(6, self.alpha), CheckNorm.HMINUS1)

    def test_linear_gap_decays_at_the_reference_rate(self):
        report = mixing_diagnostic(
            self.stepper,
            InitialCondition(),
            InitialCondition(modes={1: 0.2}),
            make_observable("mode_1", 6),
            self.constant,
            n_trajectories=8,
            seed=2,
        )
        reference = self.alpha * np.pi**4
        self.assertAlmostEqual(report.reference_rate, reference)
        self.assertEqual(len(report.times), 11)
        self.assertAlmostEqual(report.fitted_rate, reference, delta=0.1 * reference)
        self.assertEqual(report.status, Verdict.PASS)
        self.assertEqual(report.strong_feller_ratios, [])

    def test_bounded_observables_get_strong_feller_ratios(self):
        report = mixing_diagnostic(
            self.stepper,
            InitialCondition(),
            InitialCondition(modes={1: 0.2}),
            make_observable("cos_1", 6),
            self.constant,
            n_trajectories=8,
            seed=2,
        )
        self.assertEqual(len(report.strong_feller_ratios), 10)
        self.assertTrue(all(np.isfinite(r) for r in report.strong_feller_ratios))

    def test_identical_initial_data(self):
        initial = InitialCondition(modes={1: 0.1})
        report = mixing_diagnostic(
            self.stepper, initial, initial, make_observable("mode_1", 6), self.constant, n_trajectories=4
        )
        self.assertEqual(report.status, Verdict.PASS)
        self.assertEqual(report.note, "identical initial data")

    def test_nonnegative_constant_is_not_applicable(self):
        for constant in (None, 0.0, 1.5):
            report = mixing_diagnostic(
                self.stepper, InitialCondition(), InitialCondition(modes={1: 0.1}),
                make_observable("mode_1", 6), constant,
            )
            self.assertEqual(report.status, Verdict.NOT_APPLICABLE)
