"""
Command-Line Interface

Subcommands for every step of a study: simulating trials, fitting and
deploying regimes, evaluating them, inference on the fitted contrasts,
checking the exact oracles and running replicated experiments.

Usage:
    python -m regimes simulate --model 1 --n 500 --seed 7 --out dataset.csv
    python -m regimes fit --data dataset.csv --model 1 --lambda 0.5 --out regime.json
    python -m regimes deploy --regime regime.json --subjects subjects.csv --out decisions.csv
    python -m regimes evaluate --regime regime.json --model 1 --out evaluation.json
    python -m regimes infer --regime regime.json --data dataset.csv --family alpha_bar
    python -m regimes oracle configs/tiny_instance.json
    python -m regimes oracle --random 50 --seed 3
    python -m regimes experiment --config configs/model1_lambda.json --jobs 4

Exit codes:
    0 success, 1 oracle mismatch or other failure, 2 configuration error,
    3 data error, 4 numeric error

Environment:
    BQL_LOG    Log level (DEBUG, INFO, WARNING, ERROR; default WARNING)
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .bql import BalancedQLearner, BqlConfig
from .config import METHODS, load_config, setup_logging
from .core import (AssessmentCatalog, CostSpec, FittedRegime, check_keys, derive_seed,
                   lambda_from_tau, read_dataset_csv, write_dataset_csv)
from .deploy import decide_batch, write_decisions_csv
from .errors import ConfigurationError, DataError, RegimeError, exit_code_for
from .evaluation import (backward_induction_optimal, brute_force_optimal, evaluate_on_data, exact_profit,
                         fit_propensities, random_instance, read_instance, selection_frequencies)
from .experiment import fit_method, run_experiment
from .infer import family_ids, plugin_covariance
from .nuisance import LEARNER_KINDS, LearnerSpec
from .serialization import load_regime, regime_to_dict, save_regime, write_json
from .synth import generate, model_preset, preset_ids, true_profit

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-10
REFIT_TOLERANCE = 1e-8


# ========== Shared Helpers ==========

def _problem(args: argparse.Namespace) -> Tuple[AssessmentCatalog, CostSpec]:
    """Catalog and costs from --catalog or --model, with --lambda / --tau applied."""
    if args.catalog is not None:
        from .serialization import read_json
        doc = read_json(args.catalog, "catalog document")
        check_keys(doc, {"catalog", "costs", "description"}, "catalog document")
        if "catalog" not in doc:
            raise ConfigurationError(f"{args.catalog}: missing field 'catalog'")
        catalog = AssessmentCatalog.from_dict(doc["catalog"])
        catalog.validate()
        costs = CostSpec.from_dict(doc.get("costs", {}), catalog)
    else:
        preset = model_preset(args.model)
        catalog, costs = preset.catalog, preset.costs

    if args.tau is not None and args.lam is not None:
        raise ConfigurationError("give either --lambda or --tau, not both")
    if args.tau is not None:
        costs = costs.with_lambda(lambda_from_tau(args.tau))
    elif args.lam is not None:
        costs = costs.with_lambda(args.lam)
    return catalog, costs


def _bql_config(args: argparse.Namespace) -> BqlConfig:
    spec = LearnerSpec(kind=args.learner)
    return BqlConfig.with_learner(spec, K=args.K, seed=args.seed, intercept=not args.no_intercept)


def _output(path: Optional[str], default: str) -> Path:
    out = Path(path if path is not None else default)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _preset(args: argparse.Namespace):
    if getattr(args, "config", None):
        return load_config(args.config).preset()
    return model_preset(args.model)


# ========== Subcommands ==========

def cmd_simulate(args: argparse.Namespace) -> int:
    preset = _preset(args)
    n = args.n if args.n is not None else preset.n_train
    d = generate(preset.spec, n, args.seed)
    out = _output(args.out, "dataset.csv")
    write_dataset_csv(d, out)
    print(f"Wrote {d.n} trajectories of model {preset.id} to {out}")
    if args.dump_preset:
        write_json(preset.to_dict(), args.dump_preset)
        print(f"Wrote model document to {args.dump_preset}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    d = read_dataset_csv(args.data)
    catalog, costs = _problem(args)
    regime = fit_method(args.method, d, catalog, costs, _bql_config(args), sparse_penalty=args.penalty)
    out = _output(args.out, "regime.json")
    save_regime(regime, out)
    print(f"Fitted {args.method} regime on n={d.n} (lambda={costs.lam:g}); wrote {out}")
    return 0


def cmd_deploy(args: argparse.Namespace) -> int:
    regime = load_regime(args.regime)
    subjects = read_dataset_csv(args.subjects, require_outcomes=False)
    batch = decide_batch(regime, subjects.S1, subjects.S2)
    out = _output(args.out, "decisions.csv")
    write_decisions_csv(batch, out)

    flagged = int(np.sum(batch.extrapolation))
    if flagged:
        logger.warning("%d of %d subjects lie outside the training design range", flagged, len(batch))
    print(f"Decided {len(batch)} subjects; wrote {out}")
    print(f"Mean assessment cost: {float(np.mean(batch.assessment_cost)):.4f}")
    print(f"Mean treatment cost:  {float(np.mean(batch.treatment_cost)):.4f}")
    return 0


def _evaluate_model(args: argparse.Namespace, regime) -> Dict[str, Any]:
    preset = model_preset(args.model)
    est = true_profit(preset.spec, regime, lam=args.lam, n_mc=args.n_test, seed=args.seed)
    report: Dict[str, Any] = {
        "source": f"model {preset.id}",
        "n": est.n,
        "utility": est.utility,
        "profit": est.mean,
        "profit_se": est.se,
        "assessment_cost": est.assessment_cost,
        "treatment_cost": est.treatment_cost,
        "lambda": regime.costs.lam if args.lam is None else args.lam,
        "frequencies": selection_frequencies(regime, est.decisions).as_row(),
    }
    if args.oracle_profit is not None:
        report["regret"] = float(args.oracle_profit) - est.mean
    return report


def _evaluate_data(args: argparse.Namespace, regime) -> Dict[str, Any]:
    test = read_dataset_csv(args.data)
    g1, g2 = fit_propensities(test, LearnerSpec(kind=args.learner), args.K, args.seed)
    report = evaluate_on_data(test, regime, g1, g2, lam=args.lam)
    report["source"] = str(args.data)
    report["n"] = test.n
    report["frequencies"] = selection_frequencies(regime, test).as_row()
    if args.oracle_profit is not None:
        report["regret"] = float(args.oracle_profit) - report["profit"]
    return report


def cmd_evaluate(args: argparse.Namespace) -> int:
    regime = load_regime(args.regime)
    report = _evaluate_model(args, regime) if args.model is not None else _evaluate_data(args, regime)
    report["kind"] = regime.kind
    out = _output(args.out, "evaluation.json")
    write_json(report, out)
    print(f"Profit {report['profit']:.4f} (utility {report['utility']:.4f}); wrote {out}")
    return 0


def _refit(regime: FittedRegime, d) -> BalancedQLearner:
    """Repeat the regime's fit on d so the nuisance fits are available."""
    config = regime.metadata.get("config")
    if config is None:
        raise DataError("regime metadata carries no estimator config")
    learner = BalancedQLearner(BqlConfig.from_dict(config))
    refit = learner.fit(d, regime.catalog, regime.costs)
    stored = regime_to_dict(regime)["coefficients"]
    fresh = regime_to_dict(refit)["coefficients"]
    for family in stored:
        if not _same_coefficients(stored[family], fresh[family]):
            raise DataError(f"refit on this dataset does not reproduce {family}; "
                            "was the regime fitted on it?")
    return learner


def _same_coefficients(a: Any, b: Any) -> bool:
    if isinstance(a, dict):
        return set(a) == set(b) and all(_same_coefficients(a[k], b[k]) for k in a)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=0.0, atol=REFIT_TOLERANCE))


def cmd_infer(args: argparse.Namespace) -> int:
    regime = load_regime(args.regime)
    if not isinstance(regime, FittedRegime):
        raise ConfigurationError(f"inference needs a bql regime, got {regime.kind!r}")
    d = read_dataset_csv(args.data)
    learner = _refit(regime, d)

    families = args.family or family_ids(regime)
    reports = {}
    for family in families:
        report = plugin_covariance(family, regime, d, learner.trace_)
        reports[report.family] = report.to_dict(args.level)
    out = _output(args.out, "inference.json")
    write_json({"n": d.n, "level": args.level, "families": reports}, out)

    flagged = sorted(f for f, r in reports.items() if r["boundary_flag"])
    print(f"Covariances for {len(reports)} families; wrote {out}")
    if flagged:
        print(f"Boundary flag raised for: {', '.join(flagged)}")
    return 0


def _check_instance(inst, label: str) -> Dict[str, Any]:
    brute = brute_force_optimal(inst)
    backward = backward_induction_optimal(inst)
    replayed = exact_profit(inst, backward.regime)
    gap = abs(brute.profit - backward.profit)
    passed = gap <= ORACLE_TOLERANCE and abs(replayed - backward.profit) <= ORACLE_TOLERANCE
    print(f"{label}: brute force {brute.profit:.12f}, backward induction {backward.profit:.12f} "
          f"-> {'PASS' if passed else 'FAIL'}")
    return {
        "instance": label,
        "brute_force": brute.profit,
        "backward_induction": backward.profit,
        "replayed": replayed,
        "evaluations": brute.evaluations,
        "passed": passed,
    }


def cmd_oracle(args: argparse.Namespace) -> int:
    if args.random is not None:
        if args.random < 1:
            raise ConfigurationError("--random needs a positive count")
        checks = [_check_instance(random_instance(np.random.default_rng(derive_seed(args.seed, i))),
                                  f"random {i}") for i in range(args.random)]
    elif args.instance is not None:
        checks = [_check_instance(read_instance(args.instance), str(args.instance))]
    else:
        raise ConfigurationError("give an instance file or --random N")

    failed = sum(1 for c in checks if not c["passed"])
    if args.out:
        write_json({"checks": checks, "failed": failed, "tolerance": ORACLE_TOLERANCE}, args.out)
    print(f"{len(checks) - failed} of {len(checks)} instances passed")
    return 0 if failed == 0 else 1


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
    _, summary = run_experiment(cfg, jobs=args.jobs, progress=not args.quiet)
    if not summary.empty:
        metric = "regret" if cfg.instance_path is not None else "profit"
        profits = summary[summary["metric"] == metric]
        print(profits.pivot_table(index="grid_value", columns="method", values="mean").to_string())
    return 0


# ========== Parser ==========

def _add_problem_args(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--model", type=int, choices=preset_ids(), default=1,
                       help="Simulation model supplying the catalog and costs (default: 1)")
    group.add_argument("--catalog", metavar="PATH",
                       help="JSON document with 'catalog' and 'costs'")
    p.add_argument("--lambda", dest="lam", type=float, help="Trade-off scalar for all costs")
    p.add_argument("--tau", type=float, help="Willingness to pay per percentage point (lambda = 0.01/tau)")


def _add_learner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", type=int, default=2, help="Cross-fitting folds (default: 2)")
    p.add_argument("--learner", choices=LEARNER_KINDS, default="super",
                   help="Nuisance learner (default: super)")
    p.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regimes",
        description="Cost-aware two-stage treatment regimes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Set BQL_LOG=INFO or BQL_LOG=DEBUG for progress messages.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Draw a training set from a simulation model")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", type=int, choices=preset_ids(), default=1, help="Model preset (default: 1)")
    src.add_argument("--config", metavar="PATH", help="Experiment config naming the model")
    p.add_argument("--n", type=int, help="Trajectories (default: the model's training size)")
    p.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    p.add_argument("--out", help="Dataset CSV (default: dataset.csv)")
    p.add_argument("--dump-preset", metavar="PATH", help="Also write the model document as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="Fit a regime on a dataset CSV")
    p.add_argument("--data", required=True, help="Training dataset CSV")
    p.add_argument("--method", choices=METHODS, default="bql", help="Estimator (default: bql)")
    _add_problem_args(p)
    _add_learner_args(p)
    p.add_argument("--no-intercept", action="store_true", help="Drop the intercept from contrast designs")
    p.add_argument("--penalty", type=float, help="Fixed lasso penalty for --method sparse (default: CV)")
    p.add_argument("--out", help="Regime JSON (default: regime.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("deploy", help="Decide assessments and treatments for new subjects")
    p.add_argument("--regime", required=True, help="Regime JSON")
    p.add_argument("--subjects", required=True, help="Subject CSV with s1_* and s2_* columns")
    p.add_argument("--out", help="Decision CSV (default: decisions.csv)")
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("evaluate", help="Profit, utility and frequencies of a regime")
    p.add_argument("--regime", required=True, help="Regime JSON")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", type=int, choices=preset_ids(), help="Evaluate under a simulation model")
    src.add_argument("--data", help="Evaluate by IPW on a logged dataset CSV")
    p.add_argument("--lambda", dest="lam", type=float, help="Trade-off scalar (default: the regime's)")
    p.add_argument("--n-test", type=int, default=5000, help="Simulated test subjects (default: 5000)")
    p.add_argument("--oracle-profit", type=float, help="Best achievable profit; adds regret to the report")
    _add_learner_args(p)
    p.add_argument("--out", help="Report JSON (default: evaluation.json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("infer", help="Plug-in covariances and intervals of the fitted contrasts")
    p.add_argument("--regime", required=True, help="BQL regime JSON")
    p.add_argument("--data", required=True, help="The dataset the regime was fitted on")
    p.add_argument("--family", action="append",
                   help="Family such as alpha_bar, 'alpha:0,1,2' or delta:0 (repeatable; default: all)")
    p.add_argument("--level", type=float, default=0.95, help="Interval level (default: 0.95)")
    p.add_argument("--out", help="Report JSON (default: inference.json)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("oracle", help="Compare brute force and backward induction on discrete instances")
    p.add_argument("instance", nargs="?", help="Discrete instance JSON")
    p.add_argument("--random", type=int, metavar="N", help="Check N random instances instead")
    p.add_argument("--seed", type=int, default=0, help="Seed of the random instances (default: 0)")
    p.add_argument("--out", help="Also write the report as JSON")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="Run (or resume) a replicated simulation study")
    p.add_argument("--config", required=True, help="Experiment config JSON")
    p.add_argument("--seed", type=int, help="Override the config's seed")
    p.add_argument("--out", help="Override the config's output directory")
    p.add_argument("--jobs", type=int, default=1, help="Worker processes (default: 1)")
    p.add_argument("--quiet", action="store_true", help="No progress bar")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()
    try:
        return int(args.func(args))
    except RegimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
