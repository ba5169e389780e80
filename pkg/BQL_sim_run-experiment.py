"""
Replicated Simulation Study Runner

Runs every method of an experiment config over its grid and replications,
evaluating each fitted regime on simulated test subjects.

Features:
- One training draw and one set of test subjects per replication, shared
  by all methods and grid points
- Buffered writes of results.csv every save_interval rows
- Resumes: replications already in results.csv are skipped
- Worker processes over replications; results do not depend on their number
- results_FINAL.xlsx viewing copy with raw and summary sheets

Usage:
    python BQL_sim_run-experiment.py [CONFIG] [jobs] [seed] [output_dir]

Arguments:
    CONFIG: Experiment config JSON (default: configs/model1_lambda.json)
    jobs: Worker processes (default: 1)
    seed: Override the config's seed (default: the config's)
    output_dir: Override the config's output directory (default: the config's)

Example:
    # Use all defaults (Model 1 lambda sweep, one worker)
    python BQL_sim_run-experiment.py

    # Model 2 sweep on 4 workers
    python BQL_sim_run-experiment.py configs/model2_lambda.json 4

    # Regret against the exact optimum on a discrete instance
    python BQL_sim_run-experiment.py configs/regret_discrete.json 4

    # Quick check
    python BQL_sim_run-experiment.py configs/smoke.json 2 11 results/smoke_11
"""

import sys

from regimes.config import load_config, setup_logging
from regimes.errors import RegimeError, exit_code_for
from regimes.experiment import run_experiment

DEFAULT_CONFIG = "configs/model1_lambda.json"


def main():
    config_path = sys.argv[1] if len(sys.argv) > 1 else DEFAULT_CONFIG
    jobs = int(sys.argv[2]) if len(sys.argv) > 2 else 1
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else None
    output_dir = sys.argv[4] if len(sys.argv) > 4 else None

    setup_logging()
    try:
        cfg = load_config(config_path).with_overrides(seed=seed, output_dir=output_dir)
    except RegimeError as e:
        print(f"Error: {e}")
        return exit_code_for(e)

    print("=" * 60)
    print("Balanced Q-learning simulation study")
    print("=" * 60)
    print(f"Config: {config_path}")
    print(f"Model: {cfg.instance_path or cfg.spec_path or cfg.model}")
    print(f"Methods: {', '.join(cfg.methods)}")
    print(f"Replications: {cfg.replications}")
    print(f"Seed: {cfg.seed}")
    print(f"Output: {cfg.output_dir}")
    print("=" * 60)

    try:
        _, summary = run_experiment(cfg, jobs=jobs)
    except KeyboardInterrupt:
        print("\nInterrupted by user; completed replications are in results.csv")
        return 130
    except RegimeError as e:
        print(f"Error: {e}")
        return exit_code_for(e)

    metric = "regret" if cfg.instance_path is not None else "profit"
    profits = summary[summary["metric"] == metric]
    if not profits.empty:
        print(f"\nMean {metric}:")
        print(profits.pivot_table(index="grid_value", columns="method", values="mean").to_string())
    return 0


if __name__ == "__main__":
    sys.exit(main())
