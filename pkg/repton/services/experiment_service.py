"""Experiment runner: dispatch, output files and exit codes."""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from repton.models.experiment import CheckFixture, CheckNorm, ExperimentConfig, ExperimentKind, StudyKind
from repton.models.reports import ExperimentReport, Verdict, combine_verdicts
from repton.models.specs import PotentialFamily
from repton.services.assumptions import build_fixture, check_assumptions, model_fixture, sector_constant
from repton.services.contraction import contraction_experiment
from repton.services.integrator import Stepper
from repton.services.invariant_measure import (
    compare_invariant_measures,
    distribution_test,
    dynamic_average,
    gaussian_reference,
    gibbs_potential,
    gibbs_sample,
    measure_convergence_scan,
    reference_estimates,
)
from repton.services.mixing import mixing_diagnostic
from repton.services.provenance_service import provenance_service
from repton.services.studies import run_study
from repton.shared_libraries import constants
from repton.shared_libraries.errors import PreconditionError
from repton.tools import io, potentials
from repton.tools.noise import trace_bound_report
from repton.tools.observables import make_observable, resolve
from repton.tools.spectral import SpectralBasis

logger = logging.getLogger(__name__)

Outcome = Tuple[Verdict, Dict[str, Any]]


@dataclass
class ExperimentOutcome:
    """What a run produced: exit code, report and written files."""

    exit_code: int
    report: ExperimentReport
    files: List[Path] = field(default_factory=list)


def exit_code_for(verdict: Verdict) -> int:
    """2 for a failed verdict, 0 otherwise (inconclusive only warns)."""
    if verdict == Verdict.FAIL:
        return constants.EXIT_VERDICT_FAILED
    if verdict == Verdict.INCONCLUSIVE:
        logger.warning("Experiment verdict is inconclusive")
    return constants.EXIT_OK


def resolve_output_dir(config: ExperimentConfig, out: Optional[str] = None) -> Path:
    """--out, then output.directory, then REPTON_OUTPUT_DIR, then the default."""
    chosen = (
        out
        or config.output.directory
        or os.getenv(constants.OUTPUT_DIR_ENV, constants.DEFAULT_OUTPUT_DIR)
    )
    return Path(chosen)


def with_seed(config: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    """Override both the master and the noise seed."""
    if seed is None:
        return config
    noise = config.noise.model_copy(update={"seed": seed})
    return config.model_copy(update={"seed": seed, "noise": noise})


class ExperimentService:
    """Runs one experiment and writes its outputs."""

    def __init__(self):
        self.provenance = provenance_service

    def run(
        self,
        config: ExperimentConfig,
        out: Optional[str] = None,
        threads: int = constants.DEFAULT_THREADS,
    ) -> ExperimentOutcome:
        """Dispatch on the experiment kind and write report.json plus kind-specific files.

        Runtime errors are logged and turned into exit code 1 with an
        `incomplete` report; failed verdicts give exit code 2.
        """
        directory = resolve_output_dir(config, out)
        directory.mkdir(parents=True, exist_ok=True)
        handler = self._attach_log(directory)
        files: List[Path] = []
        header = self.provenance.header(config)
        try:
            logger.info(f"Starting {config.kind.value} experiment {header['experiment_id']}")
            verdict, result = self._dispatch(config, directory, header, threads, files)
            error = None
            incomplete = bool(result.pop("incomplete", False))
            exit_code = constants.EXIT_RUNTIME_ERROR if incomplete else exit_code_for(verdict)
        except Exception as e:
            logger.error(f"Experiment {header['experiment_id']} failed: {e}")
            verdict, result, error, incomplete = Verdict.FAIL, {}, str(e), True
            exit_code = constants.EXIT_RUNTIME_ERROR
        finally:
            logging.getLogger().removeHandler(handler)
            handler.close()

        report = ExperimentReport(
            experiment_id=header["experiment_id"],
            kind=config.kind.value,
            config_hash=header["config_hash"],
            seed=config.effective_seed,
            versions=self.provenance.versions(),
            verdict=verdict,
            incomplete=incomplete,
            error=error,
            result=result,
        )
        files.append(io.write_json(directory / constants.REPORT_FILE, report.model_dump(mode="json")))
        logger.info(f"Experiment finished with verdict {verdict.value}, exit code {exit_code}")
        return ExperimentOutcome(exit_code=exit_code, report=report, files=files)

    def _attach_log(self, directory: Path) -> logging.Handler:
        handler = logging.FileHandler(directory / constants.RUN_LOG_FILE, mode="w", encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logging.getLogger().addHandler(handler)
        return handler

    def _dispatch(
        self,
        config: ExperimentConfig,
        directory: Path,
        header: Dict[str, str],
        threads: int,
        files: List[Path],
    ) -> Outcome:
        match config.kind:
            case ExperimentKind.SIMULATE:
                return self._simulate(config, directory, header, threads, files)
            case ExperimentKind.CONTRACT:
                return self._contract(config, directory, header, threads, files)
            case ExperimentKind.GIBBS:
                return self._gibbs(config, threads)
            case ExperimentKind.SCAN:
                return self._scan(config, directory, header, files)
            case ExperimentKind.CHECK:
                return self._check(config)
        raise PreconditionError(f"Unknown experiment kind {config.kind}")

    @staticmethod
    def _basis(config: ExperimentConfig) -> SpectralBasis:
        d = config.discretization
        return SpectralBasis(d.n_modes, oversampling=d.oversampling)

    def _stepper(self, config: ExperimentConfig) -> Stepper:
        return Stepper(
            self._basis(config), config.model, config.noise, config.stepper, config.initial.mass
        )

    def _simulate(
        self,
        config: ExperimentConfig,
        directory: Path,
        header: Dict[str, str],
        threads: int,
        files: List[Path],
    ) -> Outcome:
        if config.analysis.study != StudyKind.NONE:
            study = run_study(config, threads)
            files.append(io.write_table_csv(directory / constants.TABLE_FILE, study.rows, header))
            return study.verdict, study.model_dump(mode="json")

        stepper = self._stepper(config)
        trajectory = stepper.run(config.initial, seed=config.effective_seed)
        files.append(
            io.write_trajectory_csv(
                directory / constants.TRAJECTORY_FILE,
                trajectory,
                header,
                include_coefficients=config.output.write_coefficients,
            )
        )
        if config.output.write_snapshot:
            files.append(io.write_snapshot(directory / constants.SNAPSHOT_FILE, trajectory.final_state))
        summary: Dict[str, Any] = {
            "steps_taken": trajectory.steps_taken,
            "records": len(trajectory),
            "failed": trajectory.failed,
            "error": trajectory.error,
            "final_monitors": trajectory.monitors[-1],
            "mass_drift": float(trajectory.final_state[0] - trajectory.states[0][0]),
            "penalty_mass_total": trajectory.ledger.total_mass,
            "stability_number": stepper.stability_number,
        }
        if trajectory.boundaries:
            final = trajectory.boundaries[-1]
            summary["boundary"] = {"l_minus": final.l_minus, "l_plus": final.l_plus}
        files.append(io.write_json(directory / constants.SUMMARY_FILE, {**header, **summary}))
        verdict = Verdict.FAIL if trajectory.failed else Verdict.PASS
        return verdict, {**summary, "incomplete": trajectory.failed}

    def _contract(
        self,
        config: ExperimentConfig,
        directory: Path,
        header: Dict[str, str],
        threads: int,
        files: List[Path],
    ) -> Outcome:
        stepper = self._stepper(config)
        settings = config.analysis.contraction
        report, series = contraction_experiment(
            stepper,
            config.initial,
            settings.second,
            seed=config.effective_seed,
            tolerance=settings.tolerance,
            rate_tolerance=settings.rate_tolerance,
        )
        rows = [{"t": i * stepper.dt, "distance": float(d)} for i, d in enumerate(series)]
        files.append(io.write_table_csv(directory / constants.TABLE_FILE, rows, header))
        result: Dict[str, Any] = {"contraction": report.model_dump(mode="json")}
        verdicts = [report.verdict]
        if report.n_steps < stepper.config.n_steps:
            result["incomplete"] = True

        mixing = config.analysis.mixing
        if mixing.enabled:
            constant = None
            if not config.model.is_singular:
                pair = model_fixture(config.model, config.noise, stepper.basis, config.initial.mass)
                constant = sector_constant(pair, CheckNorm.HMINUS1)
            diagnostic = mixing_diagnostic(
                stepper,
                config.initial,
                settings.second,
                make_observable(mixing.observable, stepper.basis.n_modes),
                constant,
                n_trajectories=mixing.n_trajectories,
                n_times=mixing.n_times,
                seed=config.effective_seed,
                threads=threads,
                rate_tolerance=mixing.rate_tolerance,
            )
            result["mixing"] = diagnostic.model_dump(mode="json")
            verdicts.append(diagnostic.status)
        return combine_verdicts(verdicts), result

    def _gibbs(self, config: ExperimentConfig, threads: int) -> Outcome:
        basis = self._basis(config)
        analysis = config.analysis
        mass = config.initial.mass
        observables = resolve(analysis.observables, basis.n_modes)
        reference = gaussian_reference(config.model, config.noise, basis, mass=mass)
        temperature = potentials.gibbs_temperature(config.noise.sigma, config.model.mobility)
        chain = gibbs_sample(
            reference,
            gibbs_potential(config.model, basis, mass, temperature),
            mass,
            analysis.chain,
            observables,
            seed=config.effective_seed,
        )
        result: Dict[str, Any] = {
            "reference": reference.describe(),
            "chain": chain.report.model_dump(mode="json"),
        }
        verdicts = [Verdict.FAIL if chain.report.tuning_failed else Verdict.PASS]

        # quadratic potentials have a closed-form Gibbs measure
        closed_form = config.model.family == PotentialFamily.POLYNOMIAL_TEST
        if closed_form:
            posterior = gaussian_reference(
                config.model, config.noise, basis, config.model.curvature, mass=mass
            )
            against = compare_invariant_measures(
                chain.report.estimates, reference_estimates(posterior, observables),
                labels=("gibbs", "analytic"), min_effective_samples=analysis.min_effective_samples,
            )
            result["gibbs_vs_analytic"] = against.model_dump(mode="json")
            verdicts.append(against.verdict)
            fit = distribution_test(chain.chains, posterior, analysis.significance)
            result["gibbs_distribution"] = fit.model_dump(mode="json")
            verdicts.append(fit.verdict)

        if analysis.compare_dynamics:
            stepper = self._stepper(config)
            ensemble = analysis.ensemble
            dynamics = dynamic_average(
                stepper,
                config.initial,
                observables,
                ensemble.n_trajectories,
                ensemble.burn_in_fraction,
                ensemble.sample_every,
                seed=config.effective_seed,
                threads=threads,
            )
            comparison = compare_invariant_measures(
                dynamics.estimates,
                chain.report.estimates,
                labels=("dynamics", "gibbs"),
                min_effective_samples=analysis.min_effective_samples,
                noise_sigma=config.noise.sigma,
            )
            result["dynamics_vs_gibbs"] = comparison.model_dump(mode="json")
            verdicts.append(comparison.verdict)
            if closed_form:
                discrete = gaussian_reference(
                    config.model, config.noise, basis, config.model.curvature,
                    stepper=config.stepper, mass=mass,
                )
                against = compare_invariant_measures(
                    dynamics.estimates, reference_estimates(discrete, observables),
                    labels=("dynamics", "analytic"),
                    min_effective_samples=analysis.min_effective_samples,
                )
                result["dynamics_vs_analytic"] = against.model_dump(mode="json")
                verdicts.append(against.verdict)
        return combine_verdicts(verdicts), result

    def _scan(
        self,
        config: ExperimentConfig,
        directory: Path,
        header: Dict[str, str],
        files: List[Path],
    ) -> Outcome:
        basis = self._basis(config)
        scan = config.analysis.scan
        reference = gaussian_reference(config.model, config.noise, basis, mass=config.initial.mass)
        report = measure_convergence_scan(
            config.model,
            reference,
            basis,
            mass=config.initial.mass,
            n_values=scan.n_values,
            n_samples=scan.n_gamma_samples,
            psi=scan.psi,
            seed=config.effective_seed,
            temperature=potentials.gibbs_temperature(config.noise.sigma, config.model.mobility),
        )
        rows = [
            {"n": row.n, **row.estimates, **{f"anchor_{k}": v for k, v in row.anchor_weights.items()}}
            for row in report.rows
        ]
        files.append(io.write_table_csv(directory / constants.TABLE_FILE, rows, header))
        return report.verdict, report.model_dump(mode="json")

    def _check(self, config: ExperimentConfig) -> Outcome:
        pair = build_fixture(config)
        report = check_assumptions(pair, config.analysis.check, seed=config.effective_seed)
        result: Dict[str, Any] = {"assumptions": report.model_dump(mode="json")}
        if config.analysis.check.fixture == CheckFixture.MODEL:
            bound = trace_bound_report(config.noise, pair.basis, seed=config.effective_seed)
            result["trace_bound"] = bound.model_dump(mode="json")
        return report.verdict, result


# Global service instance
experiment_service = ExperimentService()
