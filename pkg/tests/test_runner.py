import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from penaltyselect.config.templates import render_experiment_report
from penaltyselect.experiments.generators import ExperimentError
from penaltyselect.experiments.runner import (
    RESULT_COLUMNS,
    ExperimentSpec,
    load_experiment_spec,
    plan_trials,
    run_experiment,
    run_trial,
    table_to_csv,
    write_table,
)
from penaltyselect.utils.helpers import derive_seed

SPECS = Path(__file__).parent.parent / "experiment_specs"


class TestExperimentSpec:
    def test_defaults(self):
        spec = ExperimentSpec(kind="McisRatio")
        assert spec.trials == 100
        assert spec.n == 10
        assert spec.threshold_ranges["critical"] == (0.1, 0.4)

    def test_avc_kinds_have_ten_classes(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(kind="McisRatio", m=12)

    def test_sweep_needs_targets(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(kind="GammaSweep")

    def test_too_many_sources(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(kind="MpisRatio", n=21)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(kind="Sweep")

    def test_load(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"kind": "ModifiedMpisRatio", "trials": 3, "m": 6}))
        spec = load_experiment_spec(path)
        assert spec.kind == "ModifiedMpisRatio"
        assert spec.m == 6

    def test_load_invalid(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"kind": "GammaSweep"}))
        with pytest.raises(ExperimentError):
            load_experiment_spec(path)
        with pytest.raises(ExperimentError):
            load_experiment_spec(tmp_path / "missing.json")


class TestPlanTrials:
    def test_seeds_derive_from_master(self):
        plans = plan_trials(ExperimentSpec(kind="MpisRatio", trials=4, master_seed=11))
        assert [plan.seed for plan in plans] == [derive_seed(11, t) for t in range(4)]
        assert {plan.problem for plan in plans} == {"mpis"}

    def test_sweep_layout(self):
        spec = ExperimentSpec(kind="GammaSweep", trials=2, gamma_targets=[0.2, 0.5])
        plans = plan_trials(spec)
        assert len(plans) == 8
        assert [plan.problem for plan in plans[:4]] == ["mcis", "mcis", "mpis", "mpis"]
        assert [plan.gamma_target for plan in plans] == [0.2] * 4 + [0.5] * 4
        assert plans[0].penalties.m == 6
        assert plans[4].penalties.m == 3
        assert len({plan.trial for plan in plans}) == 8

    def test_sweep_infeasible_target(self):
        spec = ExperimentSpec(kind="GammaSweep", trials=1, m=10, gamma_targets=[0.5])
        with pytest.raises(ExperimentError):
            plan_trials(spec)


class TestRunExperiment:
    def test_modified_mpis_certificates_pass(self):
        spec = ExperimentSpec(kind="ModifiedMpisRatio", trials=6, m=8, n=6, master_seed=2)
        result = run_experiment(spec)
        assert list(result.table.columns) == RESULT_COLUMNS
        assert len(result.table) == 6
        assert result.summary.completed == 6
        assert result.summary.all_certificates_pass
        assert result.summary.cert_pass_rate == 1.0
        assert result.summary.max_ratio <= 1.0 + 1e-9

    def test_modified_mcis_ratios_at_least_one(self):
        spec = ExperimentSpec(kind="ModifiedMcisRatio", trials=4, m=8, n=6, master_seed=5)
        result = run_experiment(spec)
        assert (result.table["ratio"] >= 1.0 - 1e-9).all()
        assert result.summary.all_certificates_pass

    def test_loose_bounds_give_unit_ratio(self):
        spec = ExperimentSpec(kind="McisRatio", trials=3, n=5, fixed_bound=1.0)
        result = run_experiment(spec)
        assert result.table["greedy_value"].tolist() == [0.0] * 3
        assert result.table["ratio"].tolist() == [1.0] * 3

    def test_unlimited_budget_gives_unit_ratio(self):
        spec = ExperimentSpec(kind="MpisRatio", trials=3, n=5, fixed_budget=1000)
        result = run_experiment(spec)
        assert result.table["ratio"].tolist() == pytest.approx([1.0] * 3)

    def test_avc_mcis_ratios(self):
        spec = load_experiment_spec(SPECS / "mcis_ratio.json").model_copy(update={"trials": 20})
        result = run_experiment(spec)
        assert result.summary.completed == len(result.table) > 0
        assert (result.table["ratio"] >= 1.0 - 1e-9).all()
        assert (result.table["greedy_value"] >= result.table["opt_value"] - 1e-9).all()

    def test_avc_mpis_ratios(self):
        spec = load_experiment_spec(SPECS / "mpis_ratio.json").model_copy(update={"trials": 20})
        result = run_experiment(spec)
        ratios = result.table["ratio"]
        assert len(ratios) == 20
        assert (ratios > 0).all()
        assert (ratios <= 1.0 + 1e-9).all()
        assert table_to_csv(run_experiment(spec).table) == table_to_csv(result.table)

    def test_deterministic(self):
        spec = ExperimentSpec(kind="MpisRatio", trials=4, n=5, master_seed=42)
        first = table_to_csv(run_experiment(spec).table)
        second = table_to_csv(run_experiment(spec).table)
        assert first == second

    def test_threads_do_not_change_results(self):
        spec = ExperimentSpec(kind="ModifiedMpisRatio", trials=4, m=6, n=5, master_seed=8)
        serial = table_to_csv(run_experiment(spec, threads=1).table)
        parallel = table_to_csv(run_experiment(spec, threads=2).table)
        assert serial == parallel

    def test_trial_reproducible_from_its_seed(self):
        spec = ExperimentSpec(kind="MpisRatio", trials=3, n=5, master_seed=1)
        table = run_experiment(spec).table
        plan = plan_trials(spec)[2]
        row = run_trial(spec, plan)
        assert row["seed"] == table.loc[2, "seed"]
        assert row["greedy_value"] == pytest.approx(table.loc[2, "greedy_value"])

    def test_gamma_sweep(self):
        spec = ExperimentSpec(kind="GammaSweep", trials=2, n=5, gamma_targets=[0.2, 0.5])
        result = run_experiment(spec)
        summary = result.summary
        assert set(summary.gamma_means) == {"mcis", "mpis"}
        assert set(summary.gamma_means["mpis"]) == {"0.2", "0.5"}
        for _, row in result.table.iterrows():
            assert row["gamma_bound"] >= row["gamma_target"] - 1e-9

    def test_convergence_demo(self):
        result = run_experiment(ExperimentSpec(kind="ConvergenceDemo", horizon=50))
        convergence = result.summary.convergence
        assert convergence["class_size"] == 5
        assert convergence["max_in_class_gap"] < 1e-9
        assert convergence["final_out_of_class_max"] < 1e-6
        assert sum(convergence["final_in_class"]) == pytest.approx(1.0, abs=1e-6)
        assert len(result.table) == 51 * 10

    def test_write_table(self, tmp_path):
        spec = ExperimentSpec(kind="MpisRatio", trials=2, n=4)
        result = run_experiment(spec)
        path = tmp_path / "results.csv"
        write_table(result.table, path)
        assert path.read_text() == table_to_csv(result.table)
        assert path.read_text().splitlines()[0] == ",".join(RESULT_COLUMNS)


class TestReports:
    def test_ratio_report(self):
        spec = ExperimentSpec(kind="ModifiedMpisRatio", trials=2, m=5, n=4, master_seed=3)
        report = render_experiment_report(run_experiment(spec).summary)
        assert report.startswith("# ModifiedMpisRatio (seed 3)")
        assert "Trials: 2 of 2 completed" in report
        assert "Certificate pass rate: 1.000" in report

    def test_convergence_report(self):
        summary = run_experiment(ExperimentSpec(kind="ConvergenceDemo", horizon=10)).summary
        report = render_experiment_report(summary)
        assert "Samples: 10" in report
        assert "Equivalence class size: 5" in report
