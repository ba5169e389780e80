import json

import numpy as np
import pandas as pd
import pytest

from regimes.base_runner import BaseExperimentRunner, atomic_write_csv
from regimes.config import ExperimentConfig, LearnerSet
from regimes.errors import ConfigurationError
from regimes.evaluation import backward_induction_optimal, read_instance
from regimes.experiment import (KEY_COLUMNS, METRIC_COLUMNS, REGRET_METRICS, ExperimentRunner, fit_method,
                                frequency_columns, run_experiment, summarize_results)
from regimes.synth import model_preset
from tests.conftest import CONFIGS, RIDGE


def square(task):
    return [{"task": task, "value": task * task}], [{"task": task, "seconds": 0.0}]


class SquaresRunner(BaseExperimentRunner):
    def __init__(self, results_dir, tasks, **kwargs):
        super().__init__(results_dir, progress=False, **kwargs)
        self.tasks = tasks
        self.ran = []

    def get_tasks(self):
        return list(self.tasks)

    def task_key(self, task):
        return (task,)

    def run_task(self, task):
        self.ran.append(task)
        return square(task)

    def get_headers(self):
        return ["task", "value"]

    def sort_columns(self):
        return ["task"]


def small_config(tmp_path, **kwargs):
    options = dict(model=1, methods=("bql", "dense"), n_train=200, n_test=300, replications=2,
                   grid=(0.0, 1.0), learners=LearnerSet(RIDGE, RIDGE, RIDGE, RIDGE), seed=5,
                   output_dir=str(tmp_path), save_interval=3)
    options.update(kwargs)
    return ExperimentConfig(**options)


# ========== Base Runner ==========

def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_csv(pd.DataFrame({"a": [1, 2]}), tmp_path / "x.csv")
    assert [p.name for p in tmp_path.iterdir()] == ["x.csv"]
    assert pd.read_csv(tmp_path / "x.csv")["a"].tolist() == [1, 2]


def test_runner_writes_sorted_results_and_viewing_copy(tmp_path):
    runner = SquaresRunner(tmp_path, [3, 1, 2], save_interval=2)
    runner.run()
    results = pd.read_csv(tmp_path / "results.csv")
    assert results["task"].tolist() == [1, 2, 3]
    assert results["value"].tolist() == [1, 4, 9]
    assert (tmp_path / "results_FINAL.xlsx").exists()
    assert (tmp_path / "timings.csv").exists()
    assert runner.row_count == 3


def test_runner_resumes_completed_tasks(tmp_path):
    SquaresRunner(tmp_path, [0, 1]).run()
    again = SquaresRunner(tmp_path, [0, 1, 2])
    again.run()
    assert again.ran == [2]
    assert pd.read_csv(tmp_path / "results.csv")["task"].tolist() == [0, 1, 2]


def test_runner_ignores_foreign_results_file(tmp_path):
    pd.DataFrame({"other": [1]}).to_csv(tmp_path / "results.csv", index=False)
    runner = SquaresRunner(tmp_path, [0])
    assert runner.load_completed() == set()


# ========== Experiment ==========

def test_fit_method_rejects_unknown(model1_data, ridge_config):
    preset = model_preset(1)
    with pytest.raises(ConfigurationError):
        fit_method("forest", model1_data, preset.catalog, preset.costs, ridge_config)


def test_experiment_rows(tmp_path):
    cfg = small_config(tmp_path)
    results, summary = run_experiment(cfg, progress=False)
    assert len(results) == 2 * 2 * 2
    assert set(results["status"]) == {"ok"}
    expected = KEY_COLUMNS + METRIC_COLUMNS + frequency_columns(model_preset(1).catalog)
    assert list(results.columns[:len(expected)]) == expected
    assert results["lambda"].tolist() == [0.0, 0.0, 1.0, 1.0] * 2
    assert np.all(np.isfinite(results["profit"]))
    for name in ("results.csv", "summary.csv", "timings.csv", "results_FINAL.xlsx", "experiment.json"):
        assert (tmp_path / name).exists()
    profit = summary[summary["metric"] == "profit"]
    assert len(profit) == 4 and set(profit["count"]) == {2}


def test_rows_do_not_depend_on_worker_count(tmp_path):
    serial, _ = run_experiment(small_config(tmp_path / "serial"), jobs=1, progress=False)
    pooled, _ = run_experiment(small_config(tmp_path / "pooled"), jobs=2, progress=False)
    pd.testing.assert_frame_equal(serial, pooled)


def test_resumed_run_matches_fresh_run(tmp_path):
    fresh, _ = run_experiment(small_config(tmp_path / "fresh"), progress=False)
    run_experiment(small_config(tmp_path / "resumed", replications=1), progress=False)
    runner = ExperimentRunner(small_config(tmp_path / "resumed"), progress=False)
    assert runner.load_completed() == {(0,)}
    resumed, _ = run_experiment(small_config(tmp_path / "resumed"), progress=False)
    assert len(resumed) == len(fresh)
    np.testing.assert_allclose(resumed["profit"], fresh["profit"], rtol=0, atol=1e-12)
    assert resumed["replication"].tolist() == fresh["replication"].tolist()


def test_failed_fits_are_recorded(tmp_path, monkeypatch):
    import regimes.experiment as experiment

    def broken(method, *args, **kwargs):
        raise RuntimeError("singular design")

    monkeypatch.setattr(experiment, "fit_method", broken)
    results, summary = run_experiment(small_config(tmp_path, replications=1, methods=("bql",)),
                                      progress=False)
    assert set(results["status"]) == {"failed"}
    assert results["error"].iloc[0] == "RuntimeError: singular design"
    assert summary.empty


def test_summary_by_hand():
    rows = pd.DataFrame({
        "model": [1, 1, 1], "method": ["bql"] * 3, "grid_kind": ["lambda"] * 3,
        "grid_index": [0, 0, 0], "grid_value": [0.0] * 3,
        "profit": [1.0, 2.0, 6.0], "status": ["ok", "ok", "failed"],
    })
    summary = summarize_results(rows, ["profit", "utility"])
    assert len(summary) == 1
    row = summary.iloc[0]
    assert row["mean"] == pytest.approx(1.5)
    assert row["se"] == pytest.approx(np.std([1.0, 2.0], ddof=1) / np.sqrt(2))
    assert row["count"] == 2


# ========== Regret Study ==========

def regret_config(tmp_path, **kwargs):
    options = dict(instance_path=str(CONFIGS / "regret_instance.json"), methods=("bql", "dense"),
                   replications=2, grid=(120, 240), grid_kind="n", learners=LearnerSet(RIDGE, RIDGE, RIDGE, RIDGE),
                   seed=8, output_dir=str(tmp_path), save_interval=3)
    options.update(kwargs)
    return ExperimentConfig(**options)


def test_regret_study_rows(tmp_path):
    results, summary = run_experiment(regret_config(tmp_path), progress=False)
    assert len(results) == 2 * 2 * 2
    assert set(results["status"]) == {"ok"}
    assert list(results.columns) == KEY_COLUMNS + REGRET_METRICS + ["status", "error"]
    assert set(results["model"]) == {"regret_instance"}
    assert results["n_train"].tolist() == [120, 120, 240, 240] * 2

    best = backward_induction_optimal(read_instance(CONFIGS / "regret_instance.json")).profit
    np.testing.assert_allclose(results["oracle_profit"], best, atol=1e-12)
    np.testing.assert_allclose(results["regret"], best - results["profit"], atol=1e-12)
    assert (results["regret"] > -1e-10).all()

    assert set(summary["metric"]) == set(REGRET_METRICS)
    description = json.loads((tmp_path / "experiment.json").read_text())
    assert description["oracle_profit"] == pytest.approx(best)
    assert description["grid_kind"] == "n"


def test_regret_rows_do_not_depend_on_worker_count(tmp_path):
    serial, _ = run_experiment(regret_config(tmp_path / "serial", methods=("bql",)), jobs=1, progress=False)
    pooled, _ = run_experiment(regret_config(tmp_path / "pooled", methods=("bql",)), jobs=2, progress=False)
    pd.testing.assert_frame_equal(serial, pooled)
