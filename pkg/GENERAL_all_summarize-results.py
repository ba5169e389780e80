"""
General Purpose Result Summarizer

This script reads the summary.csv of an experiment directory and prints
figure-ready tables with:
- Rows: grid values (lambda, swept treatment cost or training size)
- Columns: methods
- Cells: mean of one metric (profit, utility, selection frequencies, ...)

Plot rendering is left to whatever tool reads the CSV.

Usage:
    # List result directories
    python GENERAL_all_summarize-results.py --list

    # Mean profit per method and grid value
    python GENERAL_all_summarize-results.py results/model1_lambda

    # Selection frequency of one candidate set, with standard errors
    python GENERAL_all_summarize-results.py results/model1_lambda --metric "freq2_{2,3,4}" --se

    # Check that summary means match the raw rows
    python GENERAL_all_summarize-results.py results/model1_lambda --check

    # Save the table
    python GENERAL_all_summarize-results.py results/model1_lambda -o profit_table.csv

Requirements:
    pip install pandas
"""

import argparse
import json
from pathlib import Path

import numpy as np
import pandas as pd


def list_result_dirs(results_dir: str = "results") -> list:
    """List all experiment directories (those holding a summary.csv)."""
    results_path = Path(results_dir)
    if not results_path.exists():
        print(f"Results directory not found: {results_dir}")
        return []

    return sorted(p.parent for p in results_path.rglob("summary.csv"))


def read_summary(result_dir: str) -> pd.DataFrame:
    """
    Read the long-format summary of an experiment.

    Args:
        result_dir: Experiment directory

    Returns:
        DataFrame with columns model, method, grid_kind, grid_value, metric, mean, se, count
    """
    return pd.read_csv(Path(result_dir) / "summary.csv", float_precision="round_trip")


def metric_table(summary: pd.DataFrame, metric: str, show_se: bool = False,
                 methods: list = None) -> pd.DataFrame:
    """
    Pivot one metric to grid values x methods.

    Args:
        summary: Long-format summary
        metric: Metric name such as "profit" or "freq2_{2,3,4}"
        show_se: Format cells as "mean (se)"
        methods: Restrict to these methods

    Returns:
        Pivoted DataFrame
    """
    rows = summary[summary["metric"] == metric]
    if methods:
        rows = rows[rows["method"].isin(methods)]
    if rows.empty:
        return pd.DataFrame()

    means = rows.pivot_table(index="grid_value", columns="method", values="mean")
    if not show_se:
        return means
    se = rows.pivot_table(index="grid_value", columns="method", values="se")
    return means.combine(se, lambda m, s: m.map("{:.4f}".format) + s.map(" ({:.4f})".format))


def check_means(result_dir: str, tolerance: float = 1e-9) -> int:
    """
    Recompute every summary mean from results.csv.

    Returns:
        Number of mismatching cells
    """
    result_path = Path(result_dir)
    summary = read_summary(result_dir)
    raw = pd.read_csv(result_path / "results.csv", float_precision="round_trip")
    raw = raw[raw["status"] == "ok"]

    mismatches = 0
    for row in summary.itertuples(index=False):
        cell = raw[(raw["method"] == row.method) & np.isclose(raw["grid_value"], row.grid_value)]
        expected = cell[row.metric].mean()
        if not np.isclose(expected, row.mean, rtol=0.0, atol=tolerance):
            mismatches += 1
            print(f"  {row.method} at {row.grid_value}: {row.metric} summary {row.mean} vs raw {expected}")
    return mismatches


def print_dir_info(result_dir: str):
    """Print the experiment document and the available metrics."""
    result_path = Path(result_dir)
    print(f"\nExperiment: {result_path}")

    doc_path = result_path / "experiment.json"
    if doc_path.exists():
        with open(doc_path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        cfg = doc.get("config", {})
        print(f"Model: {cfg.get('instance_path') or cfg.get('spec_path') or cfg.get('model')}")
        if "oracle_profit" in doc:
            print(f"Oracle profit: {doc['oracle_profit']:.6f}")
        print(f"Methods: {', '.join(cfg.get('methods', []))}")
        print(f"Replications: {cfg.get('replications')}")
        print(f"Grid ({doc.get('grid_kind')}): {doc.get('grid')}")
        print(f"Seed: {cfg.get('seed')}")

    summary = read_summary(result_dir)
    print(f"\nMetrics:")
    for metric in dict.fromkeys(summary["metric"]):
        print(f"  - {metric}")


def main():
    parser = argparse.ArgumentParser(
        description='Print summary tables of experiment results',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # List available result directories
  python GENERAL_all_summarize-results.py --list

  # Mean profit per method
  python GENERAL_all_summarize-results.py results/model2_lambda

  # Treatment rate at stage 2 for BQL only
  python GENERAL_all_summarize-results.py results/model2_lambda -m treat2 --methods bql

  # Show experiment information
  python GENERAL_all_summarize-results.py results/model2_lambda --info
        """
    )

    parser.add_argument('result_dir', nargs='?', help='Experiment directory')
    parser.add_argument('--list', '-l', action='store_true',
                       help='List available result directories')
    parser.add_argument('--metric', '-m', default='profit',
                       help='Metric to tabulate (default: profit)')
    parser.add_argument('--methods', nargs='+',
                       help='Restrict to these methods')
    parser.add_argument('--se', action='store_true',
                       help='Show Monte Carlo standard errors')
    parser.add_argument('--check', action='store_true',
                       help='Recompute summary means from results.csv')
    parser.add_argument('--output', '-o', help='Save table to CSV')
    parser.add_argument('--info', '-i', action='store_true',
                       help='Show experiment information only')

    args = parser.parse_args()

    # List result directories
    if args.list:
        dirs = list_result_dirs()
        if dirs:
            print("\nAvailable result directories:\n")
            for d in dirs:
                print(f"  {d}")
        else:
            print("No experiment results found in results/ directory")
        return

    if not args.result_dir:
        parser.print_help()
        return

    if not (Path(args.result_dir) / "summary.csv").exists():
        print(f"Error: No summary.csv in {args.result_dir}")
        return

    if args.info:
        print_dir_info(args.result_dir)
        return

    if args.check:
        mismatches = check_means(args.result_dir)
        print("Summary matches raw rows" if mismatches == 0 else f"{mismatches} mismatching cells")
        return

    summary = read_summary(args.result_dir)
    table = metric_table(summary, args.metric, show_se=args.se, methods=args.methods)
    if table.empty:
        print(f"No rows for metric {args.metric!r}")
        return

    print(f"\n{args.metric} by {summary['grid_kind'].iloc[0]}:\n")
    print(table.to_string())

    if args.output:
        table.to_csv(args.output)
        print(f"\nSaved table to {args.output}")


if __name__ == "__main__":
    main()
