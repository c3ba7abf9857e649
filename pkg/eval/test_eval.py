"""Acceptance runs of the verification laboratory at desk scale."""

import json
import math
import pathlib

import dotenv
import numpy as np
import pytest

from repton.models.experiment import parse_config
from repton.services.experiment_service import experiment_service
from repton.shared_libraries import constants
from repton.tools.io import read_trajectory_csv

DATA = pathlib.Path(__file__).parent / "data"
SETTINGS = json.loads((DATA / "test_config.json").read_text(encoding="utf-8"))
CRITERIA = SETTINGS["criteria"]


@pytest.fixture(scope="session", autouse=True)
def load_env():
    dotenv.load_dotenv()


def run_experiment(name, tmp_path):
    config = parse_config(DATA / f"{name}.json")
    out = tmp_path / name
    return experiment_service.run(config, str(out), SETTINGS["threads"]), out


def test_mass_conservation(tmp_path):
    """Mass stays put over 10^5 penalized steps of the p=3 model."""
    outcome, out = run_experiment("mass_conservation", tmp_path)
    assert outcome.exit_code == 0
    assert outcome.report.result["steps_taken"] == 100000
    assert abs(outcome.report.result["mass_drift"]) <= CRITERIA["mass_drift"]
    _, columns, data = read_trajectory_csv(out / constants.TRAJECTORY_FILE)
    mass = data[:, columns.index("mass")]
    assert np.max(np.abs(mass - mass[0])) <= CRITERIA["mass_drift"]


def test_stationary_spectrum(tmp_path):
    """Linear model: empirical mode variances against sigma^2 / (2 alpha lambda_k)."""
    outcome, _ = run_experiment("stationary_spectrum", tmp_path)
    rows = outcome.report.result["rows"]
    assert [row["mode"] for row in rows] == [1, 2, 3, 4]
    for row in rows:
        expected = 1.0 / (2.0 * 0.1 * (row["mode"] * math.pi) ** 2)
        assert row["continuous"] == pytest.approx(expected)
        assert row["relative_error"] <= CRITERIA["spectrum_relative_error"]
    assert outcome.exit_code == 0


def test_drift_equivalence(tmp_path):
    """Flux and potential drift forms converge at second order."""
    outcome, _ = run_experiment("drift_equivalence", tmp_path)
    assert outcome.exit_code == 0
    for factor in outcome.report.result["summary"]["reduction_factors"]:
        assert 3.2 <= factor <= 4.8


def test_pathwise_contraction(tmp_path):
    """H^-1 distance of two p=3 solutions on one noise path never grows."""
    outcome, out = run_experiment("contraction", tmp_path)
    report = outcome.report.result["contraction"]
    assert report["n_steps"] == 10000
    assert report["max_upward_step"] <= CRITERIA["max_upward_step"]
    assert report["final_distance"] < report["initial_distance"]
    assert outcome.exit_code == 0
    assert (out / constants.TABLE_FILE).exists()


def test_identical_initial_data_give_equal_paths(tmp_path):
    outcome, _ = run_experiment("contraction_identical", tmp_path)
    report = outcome.report.result["contraction"]
    assert report["identical_paths"]
    assert report["final_distance"] == 0.0
    assert outcome.exit_code == 0


def test_gibbs_dynamics_agreement(tmp_path):
    """Long-time averages of the regularized model against the pCN chain."""
    outcome, _ = run_experiment("gibbs_regularized", tmp_path)
    result = outcome.report.result
    assert not result["chain"]["tuning_failed"]
    assert 0.0 < result["chain"]["acceptance_rate"] < 1.0
    comparison = result["dynamics_vs_gibbs"]
    assert [row["observable"] for row in comparison["rows"]] == ["var_1", "var_2", "cos_1"]
    assert comparison["verdict"] == "pass"
    assert outcome.exit_code == 0


def test_flat_potential_matches_the_gaussian_reference(tmp_path):
    """With a zero potential both estimators reproduce the analytic variances."""
    outcome, _ = run_experiment("gibbs_flat", tmp_path)
    result = outcome.report.result
    assert result["gibbs_vs_analytic"]["verdict"] == "pass"
    assert result["dynamics_vs_analytic"]["verdict"] == "pass"
    assert result["dynamics_vs_gibbs"]["verdict"] == "pass"
    fit = result["gibbs_distribution"]
    assert fit["verdict"] == "pass"
    assert [row["statistic"] for row in fit["rows"]] == ["mode_1", "mode_2", "mode_3", "mode_4", "chi2"]
    assert outcome.exit_code == 0


def test_measure_convergence(tmp_path):
    """Regularized Gibbs weights decrease in n and kill the negative anchor state."""
    outcome, out = run_experiment("measure_scan", tmp_path)
    result = outcome.report.result
    assert result["n_samples"] == 10000
    assert result["per_sample_violations"] == 0
    assert result["estimates_monotone"]
    assert result["negative_anchor_vanishes"]
    assert outcome.exit_code == 0
    _, columns, data = read_trajectory_csv(out / constants.TABLE_FILE)
    assert list(data[:, columns.index("n")]) == [1, 2, 5, 10, 50, 200]


def test_linear_fixture_constants(tmp_path):
    outcome, _ = run_experiment("check_linear", tmp_path)
    assumptions = outcome.report.result["assumptions"]
    sharp = 2.0 * 0.1 * math.pi**4
    assert assumptions["monotonicity"]["constant"] == 0.0
    assert abs(assumptions["coercivity"]["c2_sharp"] - sharp) <= CRITERIA["constant_tolerance"]
    assert outcome.exit_code == 0


def test_convex_fixture_has_no_violations(tmp_path):
    outcome, _ = run_experiment("check_convex", tmp_path)
    assumptions = outcome.report.result["assumptions"]
    assert assumptions["monotonicity"]["n_pairs"] == 10000
    assert assumptions["monotonicity"]["violations"] == 0
    assert "trace_bound" in outcome.report.result
    assert outcome.exit_code == 0


def test_unfloored_fixture_is_flagged(tmp_path):
    outcome, _ = run_experiment("check_unfloored", tmp_path)
    assert outcome.report.result["assumptions"]["monotonicity"]["violations"] > 0
    assert outcome.exit_code == 2


def test_apriori_bound(tmp_path):
    """E sup |rho|^2 grows at most affinely in T, stably under dt halving."""
    outcome, _ = run_experiment("apriori_bound", tmp_path)
    summary = outcome.report.result["summary"]
    for key in ("slope_coarse", "slope_fine"):
        assert math.isfinite(summary[key])
        assert summary[key] >= 0.0
    assert summary["relative_change"] < CRITERIA["slope_change"]
    assert outcome.exit_code == 0


def test_reflection_ledger_is_recorded(tmp_path):
    outcome, out = run_experiment("reflection", tmp_path)
    rows = outcome.report.result["rows"]
    assert len(rows) == 6
    assert {row["family"] for row in rows} == {"singular_p2", "singular_p3"}
    assert all(row["penalty_mass"] > 0.0 for row in rows)
    assert {row["penalty_strength"] for row in rows} == {100.0}
    assert [row["dt"] for row in rows[:3]] == [2.5e-5, 1.25e-5, 6.25e-6]
    assert (out / constants.TABLE_FILE).exists()


def test_reflection_dichotomy(tmp_path):
    """p=3 penalty mass halves with dt at fixed kappa while p=2 levels off above zero."""
    outcome, _ = run_experiment("reflection", tmp_path)
    result = outcome.report.result
    summary = result["summary"]
    assert summary["p3_decreasing"]
    assert summary["p2_stabilizes"]
    p3 = [row for row in result["rows"] if row["family"] == "singular_p3"]
    p2 = [row for row in result["rows"] if row["family"] == "singular_p2"]
    assert p3[1]["ratio"] == pytest.approx(0.5, abs=0.05)
    assert p3[2]["ratio"] == pytest.approx(0.5, abs=0.05)
    assert p2[2]["ratio"] > 0.85
    assert outcome.exit_code == 0
