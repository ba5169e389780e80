"""
Replicated Simulation Studies

Runs every method over a cost (or sample-size) grid and a number of
replications of a simulation model, evaluating each fitted regime on
simulated test subjects.

Per replication r:
    - one training draw seeded by (seed, r), shared by all grid points
      (a prefix of it when the grid is over n)
    - one set of test subjects seeded by (seed, r), shared by all methods
      and grid points
    - one nuisance cache, so lambda sweeps refit no propensity or outcome
      model they already have

Rows depend only on (config, seed), never on worker count or order.

A config naming a discrete instance instead samples training data from
that instance at every n of the grid and scores each fit by its exact
regret against the backward-induction optimum.

Example:
    >>> cfg = ExperimentConfig(model=1, methods=("bql",), replications=2, grid=(0.0, 1.0))
    >>> results, summary = run_experiment(cfg, jobs=2)
"""

from __future__ import annotations

import functools
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .base_runner import BaseExperimentRunner
from .baselines import fit_dense, fit_sparse
from .bql import BalancedQLearner, BqlConfig
from .config import ExperimentConfig
from .core import AssessmentCatalog, CostSpec, Dataset, derive_seed
from .errors import ConfigurationError
from .evaluation.metrics import FrequencyTable, empirical_regret
from .evaluation.oracle import DiscreteInstance, backward_induction_optimal, sample_discrete
from .nuisance import NuisanceCache
from .serialization import write_json
from .synth.generator import draw_noise, generate, true_profit
from .synth.presets import ModelPreset

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KEY_COLUMNS = ["model", "method", "grid_kind", "grid_index", "grid_value", "replication", "n_train", "lambda"]
METRIC_COLUMNS = ["profit", "profit_se", "utility", "assessment_cost", "treatment_cost", "treat1", "treat2"]
REGRET_METRICS = ["regret", "profit", "oracle_profit"]
STATUS_COLUMNS = ["status", "error"]

# Seed streams of a replication
_TRAIN = 1
_TEST = 2
_FIT = 3


def fit_method(method: str, d: Dataset, catalog: AssessmentCatalog, costs: CostSpec, cfg: BqlConfig,
               cache: Optional[NuisanceCache] = None, sparse_penalty: Optional[float] = None):
    """Fit one of the compared methods."""
    if method == "bql":
        return BalancedQLearner(cfg, cache).fit(d, catalog, costs)
    if method == "dense":
        return fit_dense(d, catalog, costs, cfg, cache)
    if method == "sparse":
        return fit_sparse(d, catalog, costs, sparse_penalty, cfg, cache)
    raise ConfigurationError(f"unknown method {method!r}")


def frequency_columns(catalog: AssessmentCatalog) -> List[str]:
    return [f"freq1_{j}" for j in catalog.cand1] + [f"freq2_{j}" for j in catalog.cand2]


def run_replication(cfg: ExperimentConfig, preset: ModelPreset, grid_kind: str, grid: Sequence[float],
                    replication: int) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """Result rows and timing rows of one replication."""
    spec = preset.spec
    train_seed = derive_seed(cfg.seed, replication, _TRAIN)
    noise = draw_noise(spec.p, cfg.n_test, derive_seed(cfg.seed, replication, _TEST))
    bql_cfg = cfg.bql_config(derive_seed(cfg.seed, replication, _FIT))
    cache = NuisanceCache()
    default_n = cfg.n_train if cfg.n_train is not None else preset.n_train

    rows, timings = [], []
    for grid_index, value in enumerate(grid):
        costs = preset.costs_at(value, grid_kind)
        n = preset.n_at(value, grid_kind, default_n)
        d = generate(spec, n, train_seed)
        for method in cfg.methods:
            row: Dict[str, Any] = {
                "model": preset.id, "method": method, "grid_kind": grid_kind,
                "grid_index": grid_index, "grid_value": float(value), "replication": replication,
                "n_train": n, "lambda": float(costs.lam),
            }
            started = time.perf_counter()
            try:
                regime = fit_method(method, d, preset.catalog, costs, bql_cfg, cache, cfg.sparse_penalty)
                estimate = true_profit(spec, regime, costs, noise=noise)
                row.update({
                    "profit": estimate.mean, "profit_se": estimate.se, "utility": estimate.utility,
                    "assessment_cost": estimate.assessment_cost, "treatment_cost": estimate.treatment_cost,
                })
                row.update(FrequencyTable.from_decisions(estimate.decisions).as_row())
                row.update(status="ok", error="")
            except Exception as e:
                logger.warning("replication %d, %s at %s=%g failed: %s", replication, method, grid_kind, value, e)
                row.update(status="failed", error=f"{type(e).__name__}: {e}")
            rows.append(row)
            timings.append({"method": method, "grid_index": grid_index, "replication": replication,
                            "seconds": round(time.perf_counter() - started, 3)})
    return rows, timings


def run_regret_replication(cfg: ExperimentConfig, inst: DiscreteInstance, label: str, oracle_profit: float,
                           replication: int) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """Rows of one replication on a discrete instance: every method at every training size."""
    train_seed = derive_seed(cfg.seed, replication, _TRAIN)
    bql_cfg = cfg.bql_config(derive_seed(cfg.seed, replication, _FIT))
    cache = NuisanceCache()

    rows, timings = [], []
    for grid_index, value in enumerate(cfg.grid):
        n = int(value)
        d = sample_discrete(inst, n, train_seed)
        for method in cfg.methods:
            row: Dict[str, Any] = {
                "model": label, "method": method, "grid_kind": "n",
                "grid_index": grid_index, "grid_value": float(value), "replication": replication,
                "n_train": n, "lambda": float(inst.costs.lam),
            }
            started = time.perf_counter()
            try:
                regime = fit_method(method, d, inst.catalog, inst.costs, bql_cfg, cache, cfg.sparse_penalty)
                estimate = empirical_regret(inst, regime, oracle_profit)
                row.update(regret=estimate.regret, profit=estimate.profit, oracle_profit=estimate.oracle_profit)
                row.update(status="ok", error="")
            except Exception as e:
                logger.warning("replication %d, %s at n=%d failed: %s", replication, method, n, e)
                row.update(status="failed", error=f"{type(e).__name__}: {e}")
            rows.append(row)
            timings.append({"method": method, "grid_index": grid_index, "replication": replication,
                            "seconds": round(time.perf_counter() - started, 3)})
    return rows, timings



def summarize_results(results: pd.DataFrame, metrics: Sequence[str]) -> pd.DataFrame:
    """
    Long-format means and Monte Carlo standard errors over successful rows.

    Columns: model, method, grid_kind, grid_value, metric, mean, se, count.
    """
    columns = ["model", "method", "grid_kind", "grid_value", "metric", "mean", "se", "count"]
    if results.empty or "status" not in results:
        return pd.DataFrame(columns=columns)
    ok = results[results["status"] == "ok"]
    present = [m for m in metrics if m in ok.columns]
    if ok.empty or not present:
        return pd.DataFrame(columns=columns)
    long = ok.melt(id_vars=["model", "method", "grid_kind", "grid_index", "grid_value"],
                   value_vars=present, var_name="metric")
    long["metric_order"] = long["metric"].map({m: i for i, m in enumerate(present)})
    grouped = long.groupby(["model", "method", "grid_kind", "grid_index", "grid_value", "metric_order", "metric"],
                           sort=True)["value"]
    summary = grouped.agg(mean="mean", sd=lambda v: v.std(ddof=1), count="count").reset_index()
    summary["se"] = summary["sd"] / np.sqrt(summary["count"])
    return summary[columns].reset_index(drop=True)


class ExperimentRunner(BaseExperimentRunner):
    """Runner of one ExperimentConfig."""

    def __init__(self, cfg: ExperimentConfig, jobs: int = 1, progress: bool = True):
        super().__init__(cfg.output_dir, cfg.save_interval, jobs, progress)
        self.cfg = cfg
        self.preset = cfg.preset()
        self.grid_kind, self.grid = cfg.resolved_grid(self.preset)
        self.metrics = METRIC_COLUMNS + frequency_columns(self.preset.catalog)

    def get_tasks(self) -> List[int]:
        return list(range(self.cfg.replications))

    def task_key(self, task: int) -> Tuple:
        return (task,)

    def key_columns(self) -> List[str]:
        return ["replication"]

    def run_task(self, task: int):
        return self.worker()(task)

    def worker(self):
        return functools.partial(run_replication, self.cfg, self.preset, self.grid_kind, self.grid)

    def get_headers(self) -> List[str]:
        return KEY_COLUMNS + self.metrics + STATUS_COLUMNS

    def sort_columns(self) -> List[str]:
        return ["method", "grid_index", "replication"]

    def summarize(self, results: pd.DataFrame) -> pd.DataFrame:
        return summarize_results(results, self.metrics)

    def describe(self) -> Dict[str, Any]:
        """Contents of experiment.json."""
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.cfg.to_dict(),
            "model": self.preset.to_dict(),
            "grid_kind": self.grid_kind,
            "grid": list(self.grid),
        }

    def run(self) -> pd.DataFrame:
        write_json(self.describe(), self.results_dir / "experiment.json")
        summary = super().run()
        failed = sum(1 for r in self.rows if r.get("status") != "ok")
        if failed:
            logger.warning("%d of %d rows failed; see the error column of %s", failed, len(self.rows),
                           self.results_path)
        return summary


class RegretRunner(ExperimentRunner):
    """
    Runner of a config with ``instance_path``: data sampled from a discrete
    instance, each fit scored by its exact regret against backward induction.
    """

    def __init__(self, cfg: ExperimentConfig, jobs: int = 1, progress: bool = True):
        BaseExperimentRunner.__init__(self, cfg.output_dir, cfg.save_interval, jobs, progress)
        self.cfg = cfg
        self.instance = cfg.instance()
        self.label = Path(cfg.instance_path).stem
        self.grid_kind, self.grid = "n", cfg.grid
        self.metrics = list(REGRET_METRICS)
        self.oracle_profit = backward_induction_optimal(self.instance).profit
        logger.info("oracle profit of %s: %.6f", self.label, self.oracle_profit)

    def worker(self):
        return functools.partial(run_regret_replication, self.cfg, self.instance, self.label, self.oracle_profit)

    def describe(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.cfg.to_dict(),
            "instance": self.instance.to_dict(),
            "oracle_profit": self.oracle_profit,
            "grid_kind": self.grid_kind,
            "grid": list(self.grid),
        }


def run_experiment(cfg: ExperimentConfig, jobs: int = 1,
                   progress: bool = True) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Run (or resume) an experiment and return (results, summary).

    Files in ``cfg.output_dir``: results.csv, summary.csv, timings.csv,
    results_FINAL.xlsx and experiment.json.
    A config with ``instance_path`` runs the regret study instead.
    """
    runner_cls = RegretRunner if cfg.instance_path is not None else ExperimentRunner
    runner = runner_cls(cfg, jobs=jobs, progress=progress)
    summary = runner.run()
    return runner.frame(runner.rows), summary
