"""Gaussian reference, Gibbs sampling and invariant-measure comparisons.

With constant mobility m and additive conservative noise of amplitude
sigma the truncated dynamics leave invariant

    Pi(dx) = exp(-integral V(mass + x) / T) gamma(dx) / Z,   T = sigma^2 / m,

where gamma is the centred Gaussian on the fluctuation modes with the
variances of the linear part -alpha_eff bilaplacian. The mass mode is
frozen throughout: the dynamics conserve it, so every comparison happens
inside one mass sector.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from repton.models.experiment import ChainConfig, SamplerKind
from repton.models.reports import (
    ChainReport,
    ComparisonReport,
    ComparisonRow,
    DistributionReport,
    DistributionRow,
    ObservableEstimate,
    ScanReport,
    ScanRow,
    Verdict,
)
from repton.models.specs import (
    MobilityKind,
    ModelSpec,
    NoiseSpec,
    PotentialFamily,
    PotentialSpec,
    SchemeKind,
    StepperConfig,
)
from repton.services.integrator import InitialLike, Stepper
from repton.shared_libraries.errors import PreconditionError
from repton.tools import potentials
from repton.tools.noise import make_generator, mode_intensities
from repton.tools.observables import Observable, make_observable
from repton.tools.spectral import SpectralBasis

logger = logging.getLogger(__name__)

Potential = Callable[[np.ndarray], np.ndarray]

# tuning adapts the step size once per window during burn-in
TUNING_WINDOW = 100
MIN_ACCEPTANCE = 0.01
RWM_MAX_MODES = 4


@dataclass
class GaussianReference:
    """Per-mode variances of the stationary law of the linear part.

    `variances[0]` is zero: the mass mode is deterministic.
    """

    variances: np.ndarray
    alpha_eff: float
    curvature: float = 0.0
    mobility: float = 1.0
    dt: Optional[float] = None

    @property
    def fluctuation_modes(self) -> np.ndarray:
        return np.flatnonzero(self.variances > 0.0)

    def sample(self, rng: np.random.Generator, count: int, mass: float = 0.0) -> np.ndarray:
        """Draw `count` states mass + x with x ~ gamma, shape (count, K)."""
        out = rng.standard_normal((count, self.variances.size)) * np.sqrt(self.variances)
        out[:, 0] = mass
        return out

    def describe(self) -> Dict[str, object]:
        return {
            "generator": "-(alpha_eff bilaplacian + m curvature / 2 (-Laplacian)) with conservative noise",
            "alpha_eff": self.alpha_eff,
            "curvature": self.curvature,
            "mobility": self.mobility,
            "dt": self.dt,
            "variances": [float(v) for v in self.variances],
        }


def _linear_mobility(model: ModelSpec, mass: float) -> float:
    if model.mobility.kind == MobilityKind.CONSTANT:
        return model.mobility.value
    return 1.0 / max(mass, model.mobility.floor)


def gaussian_reference(
    model: ModelSpec,
    noise: NoiseSpec,
    basis: SpectralBasis,
    curvature: float = 0.0,
    stepper: Optional[StepperConfig] = None,
    mass: float = 1.0,
) -> GaussianReference:
    """Stationary variances of dc_k = -r_k c_k dt + sqrt(g_k s_k) dbeta_k.

    r_k = m curvature lambda_k / 2 + alpha_eff lambda_k^2 is the linear decay
    rate, s_k the noise intensity and g_k = lambda_k for conservative noise.
    With curvature 0 this is v_k = sigma^2 / (2 alpha_eff lambda_k). Passing a
    StepperConfig returns the exact stationary variances of the scheme at
    that dt instead.

    Raises:
        PreconditionError: alpha = 0, non-additive noise, or a dt at which
            the scheme has no stationary law.
    """
    alpha_eff = potentials.effective_alpha(model, model.mobility)
    if alpha_eff <= 0.0:
        raise PreconditionError("alpha = 0 has no stationary Gaussian reference")
    if not noise.is_additive:
        raise PreconditionError("the Gaussian reference needs additive noise")

    m = _linear_mobility(model, mass)
    lam = basis.eigenvalues
    intensity = mode_intensities(noise, basis)
    gain = lam if noise.conservative else np.ones_like(lam)
    explicit = 0.5 * m * curvature * lam
    implicit = alpha_eff * lam**2
    variances = np.zeros_like(lam)
    active = (intensity > 0.0) & (lam > 0.0)

    if stepper is None:
        rate = explicit + implicit
        variances[active] = gain[active] * intensity[active] / (2.0 * rate[active])
    else:
        dt = stepper.dt
        if stepper.scheme == SchemeKind.SEMI_IMPLICIT_ALPHA:
            s_lam = stepper.stabilization * lam
            denom = 1.0 + dt * (implicit + s_lam)
            a = (1.0 - dt * explicit + dt * s_lam) / denom
            b = 1.0 / denom
        else:
            a = 1.0 - dt * (explicit + implicit)
            b = np.ones_like(lam)
        spread = 1.0 - a**2
        if np.any(spread[active] <= 0.0):
            raise PreconditionError(f"dt={dt:g} leaves the linear scheme without a stationary law")
        variances[active] = b[active] ** 2 * gain[active] * intensity[active] * dt / spread[active]

    return GaussianReference(
        variances=variances,
        alpha_eff=alpha_eff,
        curvature=curvature,
        mobility=m,
        dt=None if stepper is None else stepper.dt,
    )


def gibbs_potential(
    spec: PotentialSpec, basis: SpectralBasis, mass: float, temperature: float = 1.0
) -> Potential:
    """Phi(x) = integral V(mass + x) / T on coefficient arrays; +inf off the domain."""

    def phi(coeffs: np.ndarray) -> np.ndarray:
        states = np.array(coeffs, dtype=float)
        states[..., 0] = mass
        return np.asarray(potentials.potential_energy(spec, basis, states)) / temperature

    return phi


def effective_sample_size(series: np.ndarray) -> float:
    """Sokal's windowed estimate N / tau_int, capped at N."""
    x = np.asarray(series, dtype=float)
    n = x.size
    centred = x - np.mean(x)
    if n < 4 or not np.any(centred):
        return float(n)
    spectrum = np.fft.rfft(centred, 2 * n)
    acf = np.fft.irfft(spectrum * np.conj(spectrum))[:n]
    acf /= acf[0]
    tau = 1.0
    for lag in range(1, n):
        tau += 2.0 * acf[lag]
        if lag >= 5.0 * tau:
            break
    tau = max(tau, 1.0)
    return float(n / tau)


def estimate_observables(
    chains: np.ndarray, observables: Sequence[Observable]
) -> List[ObservableEstimate]:
    """Means with ESS-based standard errors over (C, N, K) chain samples."""
    estimates = []
    for observable in observables:
        values = observable(chains)
        ess = sum(effective_sample_size(row) for row in values)
        variance = float(np.var(values))
        error = float(np.sqrt(variance / ess)) if ess > 0.0 else float("inf")
        estimates.append(
            ObservableEstimate(
                name=observable.name,
                mean=float(np.mean(values)),
                std_error=error,
                effective_samples=float(ess),
            )
        )
    return estimates


@dataclass
class GibbsResult:
    """Retained chain states (C, N, K) and their diagnostics."""

    chains: np.ndarray
    report: ChainReport

    @property
    def samples(self) -> np.ndarray:
        return self.chains.reshape(-1, self.chains.shape[-1])


def gibbs_sample(
    reference: GaussianReference,
    potential: Potential,
    mass: float,
    chain: Optional[ChainConfig] = None,
    observables: Sequence[Observable] = (),
    seed: int = 0,
    n_chains: int = 1,
    first_stream: int = 0,
) -> GibbsResult:
    """Metropolis chains targeting exp(-Phi) gamma on the fluctuation modes.

    pCN proposes x' = sqrt(1 - beta^2) x + beta xi with xi ~ gamma and accepts
    with min(1, exp(Phi(x) - Phi(x'))); states with Phi = +inf are never
    accepted. RWM proposes x + beta xi and also carries the gamma density
    ratio; it is only offered for a handful of modes. During burn-in beta is
    adapted toward the target acceptance once per window.

    Raises:
        PreconditionError: RWM on too many modes, or a start outside the support.
    """
    chain = chain or ChainConfig()
    modes = reference.fluctuation_modes
    pcn = chain.sampler == SamplerKind.PCN
    if not pcn and modes.size > RWM_MAX_MODES:
        raise PreconditionError(
            f"random-walk Metropolis is limited to {RWM_MAX_MODES} modes, got {modes.size}"
        )
    generators = [make_generator(seed, first_stream + i) for i in range(n_chains)]
    sd = np.sqrt(reference.variances[modes])
    precision = 1.0 / reference.variances[modes]

    x = np.zeros((n_chains, reference.variances.size))
    x[:, 0] = mass
    phi = potential(x)
    if not np.all(np.isfinite(phi)):
        raise PreconditionError("the constant state lies outside the support of the target")

    beta = np.full(n_chains, chain.beta)
    upper = 1.0 if pcn else 10.0
    window = np.zeros(n_chains)
    accepted = np.zeros(n_chains)
    kept = np.zeros((n_chains, chain.n_samples, x.shape[1]))
    total = chain.burn_in + chain.n_samples * chain.thin

    for it in range(total):
        draws = [g.standard_normal(modes.size) for g in generators]
        log_u = np.log([g.random() for g in generators])
        xi = np.stack(draws) * sd
        proposal = x.copy()
        if pcn:
            proposal[:, modes] = np.sqrt(1.0 - beta**2)[:, None] * x[:, modes] + beta[:, None] * xi
        else:
            proposal[:, modes] = x[:, modes] + beta[:, None] * xi
        phi_new = potential(proposal)
        with np.errstate(invalid="ignore"):
            log_ratio = phi - phi_new
        if not pcn:
            log_ratio = log_ratio + 0.5 * (
                np.sum(precision * x[:, modes] ** 2, axis=1)
                - np.sum(precision * proposal[:, modes] ** 2, axis=1)
            )
        accept = np.isfinite(phi_new) & (log_u < log_ratio)
        x[accept] = proposal[accept]
        phi[accept] = phi_new[accept]

        if it < chain.burn_in:
            window += accept
            if chain.tune and (it + 1) % TUNING_WINDOW == 0:
                rate = window / TUNING_WINDOW
                beta = np.clip(beta * np.exp(rate - chain.target_acceptance), 1e-4, upper)
                window[:] = 0.0
        else:
            accepted += accept
            j = it - chain.burn_in
            if (j + 1) % chain.thin == 0:
                kept[:, j // chain.thin] = x

    kept_iterations = max(1, total - chain.burn_in)
    acceptance = float(np.sum(accepted) / (n_chains * kept_iterations))
    tuning_failed = acceptance < MIN_ACCEPTANCE
    if tuning_failed:
        logger.warning(f"Chain acceptance {acceptance:.3%} is below {MIN_ACCEPTANCE:.0%} after tuning")
    report = ChainReport(
        sampler=chain.sampler.value,
        beta=float(np.mean(beta)),
        acceptance_rate=acceptance,
        n_samples=int(n_chains * chain.n_samples),
        tuning_failed=tuning_failed,
        estimates=estimate_observables(kept, observables),
    )
    logger.info(
        f"{chain.sampler.value} chain: acceptance {acceptance:.3f}, beta {report.beta:.3g}, "
        f"{report.n_samples} samples"
    )
    return GibbsResult(chains=kept, report=report)


def distribution_test(
    chains: np.ndarray,
    reference: GaussianReference,
    significance: float = 1e-3,
    min_samples: int = 20,
) -> DistributionReport:
    """Kolmogorov-Smirnov tests of (C, N, K) chain samples against a Gaussian law.

    Each fluctuation mode is tested against N(0, v_k) and the quadratic form
    sum_k x_k^2 / v_k against chi-squared with one degree of freedom per mode.
    The chains are thinned by the largest integrated autocorrelation time
    first; the family-wise level is split evenly over the tests.

    Raises:
        PreconditionError: No fluctuation modes, or too few samples left after thinning.
    """
    modes = reference.fluctuation_modes
    if modes.size == 0:
        raise PreconditionError("the reference has no fluctuation modes to test")
    x = np.asarray(chains, dtype=float)[..., modes]
    n = x.shape[1]
    ess = min(effective_sample_size(x[c, :, i]) for c in range(x.shape[0]) for i in range(modes.size))
    stride = max(1, int(np.ceil(n / max(ess, 1.0))))
    thinned = x[:, ::stride].reshape(-1, modes.size)
    if thinned.shape[0] < min_samples:
        raise PreconditionError(
            f"only {thinned.shape[0]} samples after thinning by {stride}; lengthen the chain"
        )

    sd = np.sqrt(reference.variances[modes])
    rows: List[DistributionRow] = []
    for i, k in enumerate(modes):
        result = stats.kstest(thinned[:, i], "norm", args=(0.0, sd[i]))
        rows.append(
            DistributionRow(
                statistic=f"mode_{k}",
                ks_statistic=float(result.statistic),
                p_value=float(result.pvalue),
            )
        )
    quadratic = np.sum((thinned / sd) ** 2, axis=1)
    result = stats.kstest(quadratic, "chi2", args=(modes.size,))
    rows.append(
        DistributionRow(
            statistic="chi2", ks_statistic=float(result.statistic), p_value=float(result.pvalue)
        )
    )

    level = significance / len(rows)
    verdict = Verdict.PASS if all(r.p_value >= level for r in rows) else Verdict.FAIL
    logger.info(
        f"Distribution test on {thinned.shape[0]} samples (stride {stride}): "
        f"smallest p-value {min(r.p_value for r in rows):.3g}, verdict {verdict.value}"
    )
    return DistributionReport(
        rows=rows,
        stride=stride,
        n_samples=int(thinned.shape[0]),
        significance=significance,
        verdict=verdict,
    )


@dataclass
class DynamicAverage:
    """Time averages over an ensemble after burn-in."""

    estimates: List[ObservableEstimate]
    trajectory_means: np.ndarray
    samples_per_trajectory: int


def dynamic_average(
    stepper: Stepper,
    initial: InitialLike,
    observables: Sequence[Observable],
    n_trajectories: int,
    burn_in_fraction: float = 0.5,
    sample_every: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> DynamicAverage:
    """Long-time averages of the observables along an ensemble of trajectories.

    The standard error comes from the spread of per-trajectory means; the
    effective sample count is the pooled variance over the squared error.
    """
    n_steps = stepper.config.n_steps
    start = int(np.ceil(burn_in_fraction * n_steps))
    n_obs = len(observables)
    sums = np.zeros((n_trajectories, n_obs))
    squares = np.zeros((n_trajectories, n_obs))
    counts = np.zeros(n_trajectories)

    def observe(step: int, t: float, coeffs: np.ndarray, rows: slice) -> None:
        if step < start:
            return
        values = np.stack([o(coeffs) for o in observables], axis=-1)
        sums[rows] += values
        squares[rows] += values**2
        counts[rows] += 1

    stepper.run_ensemble(
        initial, n_trajectories, seed=seed, threads=threads,
        observer=observe, observe_every=sample_every,
    )
    if np.any(counts == 0):
        raise PreconditionError("no samples after burn-in; lengthen t_end or shorten sample_every")

    means = sums / counts[:, None]
    grand = np.mean(means, axis=0)
    total = float(np.sum(counts))
    pooled = np.sum(squares, axis=0) / total - grand**2
    if n_trajectories > 1:
        errors = np.std(means, axis=0, ddof=1) / np.sqrt(n_trajectories)
    else:
        errors = np.full(n_obs, np.inf)
    estimates = []
    for i, observable in enumerate(observables):
        if errors[i] > 0.0 and np.isfinite(errors[i]):
            ess = min(total, float(max(pooled[i], 0.0) / errors[i] ** 2))
        else:
            ess = total if errors[i] == 0.0 else 0.0
        estimates.append(
            ObservableEstimate(
                name=observable.name,
                mean=float(grand[i]),
                std_error=float(errors[i]),
                effective_samples=ess,
            )
        )
    return DynamicAverage(
        estimates=estimates,
        trajectory_means=means,
        samples_per_trajectory=int(counts[0]),
    )


def reference_estimates(
    reference: GaussianReference, observables: Sequence[Observable]
) -> List[ObservableEstimate]:
    """Closed-form gamma expectations of the standard observables (zero error)."""
    out = []
    for observable in observables:
        prefix, _, index = observable.name.partition("_")
        k = int(index) if index.isdigit() else 0
        v = float(reference.variances[k]) if k else 0.0
        match prefix:
            case "one":
                value = 1.0
            case "mode":
                value = 0.0
            case "var":
                value = v
            case "cos":
                value = float(np.exp(-0.5 * v))
            case _:
                raise PreconditionError(f"no closed form for observable '{observable.name}'")
        out.append(
            ObservableEstimate(
                name=observable.name, mean=value, std_error=0.0, effective_samples=float("inf")
            )
        )
    return out


def compare_invariant_measures(
    first: Sequence[ObservableEstimate],
    second: Sequence[ObservableEstimate],
    labels: Tuple[str, str] = ("dynamics", "gibbs"),
    min_effective_samples: float = 100.0,
    noise_sigma: Optional[float] = None,
) -> ComparisonReport:
    """Observable-by-observable agreement within 3 combined standard errors.

    A failing row fails the comparison; otherwise too few effective samples
    on either side make it inconclusive.

    Raises:
        PreconditionError: Zero noise (no ergodicity to compare against).
    """
    if noise_sigma is not None and noise_sigma <= 0.0:
        raise PreconditionError("zero noise: the dynamics are not ergodic, nothing to compare")
    lookup = {e.name: e for e in second}
    rows: List[ComparisonRow] = []
    effective: List[float] = []
    for a in first:
        b = lookup.get(a.name)
        if b is None:
            continue
        combined = float(np.hypot(a.std_error, b.std_error))
        difference = a.mean - b.mean
        rows.append(
            ComparisonRow(
                observable=a.name,
                first=a.mean,
                first_error=a.std_error,
                second=b.mean,
                second_error=b.std_error,
                difference=difference,
                combined_error=combined,
                verdict=Verdict.PASS if abs(difference) <= 3.0 * combined else Verdict.FAIL,
            )
        )
        effective += [a.effective_samples, b.effective_samples]
    if not rows:
        raise PreconditionError("the two estimators share no observable")
    min_ess = float(min(effective))
    if any(r.verdict == Verdict.FAIL for r in rows):
        verdict = Verdict.FAIL
    elif min_ess < min_effective_samples:
        verdict = Verdict.INCONCLUSIVE
        logger.warning(f"Only {min_ess:.0f} effective samples, comparison inconclusive")
    else:
        verdict = Verdict.PASS
    return ComparisonReport(
        labels=list(labels), rows=rows, min_effective_samples=min_ess, verdict=verdict
    )


def limit_potential(model: PotentialSpec) -> PotentialSpec:
    """The singular potential a regularized (or singular) model converges to."""
    if model.family == PotentialFamily.POLYNOMIAL_TEST:
        raise PreconditionError("the polynomial test family has no singular limit")
    base = model.family if model.is_singular else model.base
    return PotentialSpec(
        family=base,
        alpha=model.alpha,
        additive_constant=model.additive_constant,
        eval_floor=model.eval_floor,
    )


def measure_convergence_scan(
    model: PotentialSpec,
    reference: GaussianReference,
    basis: SpectralBasis,
    mass: float = 1.0,
    n_values: Sequence[int] = (1, 2, 5, 10, 50, 200),
    n_samples: int = 10000,
    psi: Sequence[str] = ("one",),
    seed: int = 0,
    temperature: float = 1.0,
) -> ScanReport:
    """Estimates of integral psi exp(-E^n) d gamma on one shared gamma sample set.

    Weights exp(-E^n(x)) must be non-increasing in n for every sample; the
    constant anchor state x = 1 keeps exp(-V(1)/T) for all n >= 1 and the
    weight of x = -1 must vanish. The limit uses the singular V with the
    indicator of x > 0.
    """
    limit = limit_potential(model)
    levels = sorted(set(int(n) for n in n_values))
    samples = reference.sample(make_generator(seed, 0), n_samples, mass)
    anchors = {"one": basis.constant(1.0), "minus_one": basis.constant(-1.0)}
    tests = [make_observable(name, basis.n_modes) for name in psi]
    psi_values = {t.name: t(samples) for t in tests}

    def weights(spec: PotentialSpec, states: np.ndarray) -> np.ndarray:
        return np.exp(-np.asarray(potentials.potential_energy(spec, basis, states)) / temperature)

    rows: List[ScanRow] = []
    history: Dict[str, List[float]] = {t.name: [] for t in tests}
    minus_history: List[float] = []
    previous: Optional[np.ndarray] = None
    violations = 0
    for n in levels:
        spec = limit.regularized(n)
        w = weights(spec, samples)
        if previous is not None:
            violations += int(np.count_nonzero(w > previous))
        previous = w
        estimates = {name: float(np.mean(values * w)) for name, values in psi_values.items()}
        anchor_weights = {name: float(weights(spec, state)) for name, state in anchors.items()}
        for name, value in estimates.items():
            history[name].append(value)
        minus_history.append(anchor_weights["minus_one"])
        rows.append(ScanRow(n=n, estimates=estimates, anchor_weights=anchor_weights))

    limit_w = weights(limit, samples)
    limit_estimates = {name: float(np.mean(values * limit_w)) for name, values in psi_values.items()}
    gaps = {
        name: [value - limit_estimates[name] for value in history[name]] for name in history
    }
    monotone = all(
        all(b <= a for a, b in zip(history[t.name], history[t.name][1:]))
        for t in tests
        if np.all(psi_values[t.name] >= 0.0)
    )
    vanishes = bool(
        all(b <= a for a, b in zip(minus_history, minus_history[1:]))
        and minus_history
        and minus_history[-1] < 1e-12
    )
    verdict = Verdict.PASS if violations == 0 and monotone and vanishes else Verdict.FAIL
    logger.info(
        f"Convergence scan over n={levels}: {violations} per-sample violations, "
        f"monotone={monotone}, minus-one anchor vanishes={vanishes}"
    )
    return ScanReport(
        rows=rows,
        limit_estimates=limit_estimates,
        limit_gaps=gaps,
        per_sample_violations=violations,
        estimates_monotone=monotone,
        negative_anchor_vanishes=vanishes,
        n_samples=n_samples,
        verdict=verdict,
    )
