"""Empirical mixing and strong-Feller diagnostics.

Two ensembles start from different initial data and share their noise
streams (common random numbers); the decay of |E phi(rho1_t) - E phi(rho2_t)|
is fitted to an exponential and compared with half the monotonicity gap.
"""

import logging
from typing import List, Optional

import numpy as np

from repton.models.reports import MixingReport, Verdict
from repton.services.integrator import InitialLike, Stepper
from repton.tools.observables import Observable

logger = logging.getLogger(__name__)


def _observed_means(
    stepper: Stepper,
    initial: InitialLike,
    observable: Observable,
    n_trajectories: int,
    every: int,
    n_points: int,
    seed: int,
    threads: int,
) -> np.ndarray:
    values = np.zeros((n_points, n_trajectories))

    def observe(step: int, t: float, coeffs: np.ndarray, rows: slice) -> None:
        index = step // every
        if index < n_points:
            values[index, rows] = observable(coeffs)

    stepper.run_ensemble(
        initial, n_trajectories, seed=seed, threads=threads,
        observer=observe, observe_every=every,
    )
    return values


def mixing_diagnostic(
    stepper: Stepper,
    first: InitialLike,
    second: InitialLike,
    observable: Observable,
    sector_constant: Optional[float],
    n_trajectories: int = 256,
    n_times: int = 10,
    seed: int = 0,
    threads: int = 1,
    rate_tolerance: float = 0.2,
) -> MixingReport:
    """Fit the exponential decay of the observable gap over the stepper's horizon.

    Args:
        sector_constant: Sharp monotonicity constant -lambda; the reference
            rate is lambda / 2. A nonnegative value makes the diagnostic
            not applicable.

    Returns:
        MixingReport; passes when the fitted rate reaches the reference rate
        up to `rate_tolerance`.
    """
    if sector_constant is None or sector_constant >= 0.0:
        return MixingReport(
            status=Verdict.NOT_APPLICABLE,
            note="the monotonicity constant is not negative, no rate to compare with",
        )
    reference = -0.5 * sector_constant
    n_steps = stepper.config.n_steps
    every = max(1, n_steps // n_times)
    n_points = n_steps // every + 1

    a = _observed_means(stepper, first, observable, n_trajectories, every, n_points, seed, threads)
    b = _observed_means(stepper, second, observable, n_trajectories, every, n_points, seed, threads)
    paired = a - b
    times = np.arange(n_points) * every * stepper.dt
    differences = np.abs(np.mean(paired, axis=1))
    errors = np.std(paired, axis=1, ddof=1) / np.sqrt(n_trajectories)

    start_a = stepper.prepare_initial(first)
    start_b = stepper.prepare_initial(second)
    separation = float(stepper.basis.l2_norm(start_a - start_b))
    ratios: List[float] = []
    if observable.sup_norm and separation > 0.0:
        ratios = [
            float(d * np.sqrt(t) / (observable.sup_norm * separation))
            for t, d in zip(times[1:], differences[1:])
        ]

    if separation == 0.0:
        return MixingReport(
            status=Verdict.PASS,
            times=times.tolist(),
            differences=differences.tolist(),
            reference_rate=reference,
            strong_feller_ratios=ratios,
            note="identical initial data",
        )

    usable = differences > 3.0 * errors
    usable[0] = differences[0] > 0.0
    fitted = None
    status = Verdict.INCONCLUSIVE
    note = None
    if np.count_nonzero(usable) >= 2:
        slope = np.polyfit(times[usable], np.log(differences[usable]), 1)[0]
        fitted = float(-slope)
        status = Verdict.PASS if fitted >= (1.0 - rate_tolerance) * reference else Verdict.FAIL
    else:
        note = "the gap falls below the Monte Carlo noise too early to fit a rate"
    logger.info(
        f"Mixing diagnostic: fitted rate {fitted}, reference {reference:.4g}, status {status.value}"
    )
    return MixingReport(
        status=status,
        times=times.tolist(),
        differences=differences.tolist(),
        fitted_rate=fitted,
        reference_rate=reference,
        strong_feller_ratios=ratios,
        note=note,
    )
