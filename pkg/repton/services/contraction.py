"""Pathwise contraction in H^-1 of two solutions driven by one noise path."""

import logging
from typing import Optional, Tuple

import numpy as np

from repton.models.reports import ContractionReport, Verdict
from repton.models.specs import MobilityKind, PotentialFamily
from repton.services.integrator import InitialLike, Stepper
from repton.shared_libraries import constants
from repton.shared_libraries.errors import PreconditionError, ReptonError
from repton.tools.noise import WienerIncrements

logger = logging.getLogger(__name__)


def linear_decay_rate(stepper: Stepper, difference: np.ndarray) -> Optional[float]:
    """Decay rate of the single mode a linear-model difference occupies, if any.

    For V'' = curvature and constant mobility m, a difference in mode k decays
    like exp(-(m curvature lambda_k / 2 + alpha_eff lambda_k^2) t), so its H^-1
    square decays at twice that rate.
    """
    model = stepper.model
    if model.family != PotentialFamily.POLYNOMIAL_TEST or model.mobility.kind != MobilityKind.CONSTANT:
        return None
    active = np.flatnonzero(np.abs(difference[1:]) > 0.0) + 1
    if active.size != 1:
        return None
    lam = float(stepper.basis.eigenvalues[active[0]])
    return 0.5 * model.mobility.value * model.curvature * lam + stepper.alpha_eff * lam**2


def contraction_experiment(
    stepper: Stepper,
    first: InitialLike,
    second: InitialLike,
    seed: int = 0,
    stream: int = 0,
    tolerance: float = 1e-10,
    rate_tolerance: float = 0.02,
) -> Tuple[ContractionReport, np.ndarray]:
    """Run both initial data on identical noise and track d(t) = |rho1 - rho2|^2_{-1}.

    Each trajectory owns its own noise source built from the same seed and
    stream, so identical initial data give bitwise identical paths.

    Returns:
        The report and the distance series (one entry per step, t = 0 first).

    Raises:
        PreconditionError: Non-additive noise, alpha = 0, or different masses.
    """
    if not stepper.noise.is_additive:
        raise PreconditionError("contraction needs additive noise")
    if stepper.alpha_eff <= 0.0:
        raise PreconditionError("contraction needs alpha > 0")
    a = stepper.prepare_initial(first)
    b = stepper.prepare_initial(second)
    if abs(a[0] - b[0]) > constants.MASS_TOLERANCE:
        raise PreconditionError(
            f"initial data have different masses ({a[0]:.17g} vs {b[0]:.17g})"
        )

    basis = stepper.basis
    source_a = WienerIncrements(stepper.noise, basis, seed, [stream])
    source_b = WienerIncrements(stepper.noise, basis, seed, [stream])

    def distance(x: np.ndarray, y: np.ndarray) -> float:
        diff = x - y
        diff[0] = 0.0
        return float(basis.hminus1_norm_sq(diff))

    expected = linear_decay_rate(stepper, a - b)
    n_steps = stepper.config.n_steps
    series = np.zeros(n_steps + 1)
    series[0] = distance(a, b)
    identical = bool(np.array_equal(a, b))
    completed = n_steps
    for n in range(1, n_steps + 1):
        try:
            a, _, _ = stepper.advance(a, source_a.sample_increment(stepper.dt), n)
            b, _, _ = stepper.advance(b, source_b.sample_increment(stepper.dt), n)
        except ReptonError as e:
            logger.error(f"Contraction run stopped at step {n}: {e}")
            completed = n - 1
            break
        series[n] = distance(a, b)
        identical = identical and bool(np.array_equal(a, b))
    series = series[: completed + 1]

    upward = float(np.max(np.diff(series))) if series.size > 1 else 0.0
    fitted = None
    if expected is not None and series.size > 2 and series[0] > 0.0:
        t = np.arange(series.size) * stepper.dt
        usable = series > 0.0
        slope = np.polyfit(t[usable], np.log(series[usable]), 1)[0]
        fitted = float(-0.5 * slope)

    verdict = Verdict.PASS
    if completed < n_steps or upward > tolerance:
        verdict = Verdict.FAIL
    if fitted is not None and abs(fitted - expected) > rate_tolerance * expected:
        verdict = Verdict.FAIL
    if series[0] == 0.0 and not identical:
        verdict = Verdict.FAIL

    logger.info(
        f"Contraction over {completed} steps: d0={series[0]:.4g}, d_end={series[-1]:.4g}, "
        f"max upward step {upward:.3g}, verdict {verdict.value}"
    )
    report = ContractionReport(
        n_steps=completed,
        dt=stepper.dt,
        initial_distance=float(series[0]),
        final_distance=float(series[-1]),
        max_upward_step=upward,
        identical_paths=identical,
        fitted_rate=fitted,
        expected_rate=expected,
        tolerance=tolerance,
        verdict=verdict,
    )
    return report, series
