#!/usr/bin/env python3
"""
Command-line entry point.

    python -m experiments.cli run --config configs/oa_curve.json [--seed-override N] [--out DIR] [--workers N]
    python -m experiments.cli deuteron --summary
    python -m experiments.cli list

Exit codes: 0 every acceptance check passed, 1 a check failed or the target
was infeasible, 2 the config could not be used.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from experiments.config import EXPERIMENTS, ConfigError, load_config, load_environment
from experiments.run_logger import EventType, Severity, get_run_logger
from experiments.runner import EXIT_CONFIG, EXIT_FAILED, run_experiment
from sqpe_estimators.deuteron import deuteron

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqpe-experiments",
        description="Reproduce the estimator benchmarks from JSON configs",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one experiment config")
    run.add_argument("--config", required=True, help="Path to the experiment JSON")
    run.add_argument("--seed-override", type=int, help="Replace the config's seeds with this one seed")
    run.add_argument("--out", help="Output directory (default: $SQPE_OUTPUT_DIR or results)")
    run.add_argument("--workers", type=int, help="Worker processes (default: $SQPE_WORKERS)")

    bench = commands.add_parser("deuteron", help="Deuteron benchmark reference numbers")
    bench.add_argument("--summary", action="store_true", help="Print the reference numbers as JSON")

    commands.add_parser("list", help="List the experiment kinds")
    return parser


def _run(args: argparse.Namespace) -> int:
    try:
        env = load_environment()
        out_dir = Path(args.out or env.output_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    run_log = get_run_logger(str(out_dir))
    try:
        config = load_config(args.config)
        if args.seed_override is not None:
            config = config.model_copy(update={"seeds": [args.seed_override]})
    except ConfigError as e:
        run_log.log_event(EventType.CONFIG_ERROR, severity=Severity.HIGH, error_message=str(e),
                          parameters={"config": args.config})
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    workers = args.workers if args.workers is not None else env.workers
    try:
        outcome = run_experiment(config, out_dir, max(1, workers), run_log)
    except Exception as e:
        logger.error(f"{config.experiment} failed: {e}", exc_info=True)
        run_log.log_event(EventType.ERROR, severity=Severity.CRITICAL, experiment=config.experiment,
                          error_message=str(e))
        return EXIT_FAILED

    for lm in outcome.landmarks:
        mark = "PASS" if lm.passed else ("FAIL" if lm.gating else "INFO")
        print(f"  [{mark}] {lm.name}: {lm.measured} (expected {lm.tolerance})")
    print(f"{outcome.experiment}: {outcome.status} -> {outcome.csv_path}")
    return outcome.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = "INFO"
    try:
        level = load_environment().log_level
    except ConfigError:
        pass
    logging.basicConfig(level=getattr(logging, level, logging.INFO))

    if args.command == "run":
        return _run(args)
    if args.command == "deuteron":
        refs = deuteron().references
        if args.summary:
            print(json.dumps(refs, indent=2))
        else:
            print(f"E_gs = {refs['E_gs']:.4f} MeV, ||H_T||_1 = {refs['traceless_one_norm']}, R_O = {refs['R_O']:.4f}")
        return 0
    for name in EXPERIMENTS:
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
