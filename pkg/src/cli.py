"""
Command-line front-end.

    nonga <experiment> --filter <f> --seed <s> --config <path> --out <dir>
    nonga sweep --seed <s> --workers <n>
    nonga validate

Experiments: bimodal, doublewell, sine-bimodal, sine-far.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .config import EXPERIMENTS, FILTERS, get_config, load_experiment_config
from .exceptions import AppError
from .harness import run_experiment, sweep, write_report, write_sweep
from .logging_config import generate_run_id, get_logger, run_context, setup_logging
from .validation import hard_failures, run_validation

logger = get_logger(__name__)

COMMAND_SWEEP = "sweep"
COMMAND_VALIDATE = "validate"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Run seed (sweep: first seed)")
    parser.add_argument("--config", type=str, default=None, help="Flat JSON/YAML run config")
    parser.add_argument("--out", type=str, default=None, help="Output directory (default: <output_dir>/<command>)")
    parser.add_argument("--ensemble-size", type=int, default=None, dest="ensemble_size")
    parser.add_argument("--log-level", type=str, default=None, help="DEBUG, INFO, WARNING, ERROR")
    parser.add_argument("--log-file", type=str, default=None, help="Log file path; empty string disables it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonga",
        description="Ensemble data assimilation experiments: EnKF, SIS and EnKF-SIS."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name, help=f"Run the {name} experiment")
        sub.add_argument("--filter", choices=FILTERS, default=None)
        _add_common_arguments(sub)

    sub = subparsers.add_parser(COMMAND_SWEEP, help="Double-well RMSE of every filter over several seeds")
    sub.add_argument("--workers", type=int, default=None, help="Worker threads")
    sub.add_argument("--seeds", type=int, default=None, dest="sweep_seeds", help="Number of seeds")
    _add_common_arguments(sub)

    sub = subparsers.add_parser(COMMAND_VALIDATE, help="Oracle and statistical self-checks")
    sub.add_argument("--workers", type=int, default=None, help="Worker threads")
    _add_common_arguments(sub)
    return parser


def _log_progress(status: str, current: int, total: int) -> None:
    logger.info(f"{status} ({current}/{total})")


def _run(args: argparse.Namespace) -> int:
    overrides = {
        "seed": args.seed,
        "ensemble_size": args.ensemble_size,
        "filter": getattr(args, "filter", None),
        "workers": getattr(args, "workers", None),
        "sweep_seeds": getattr(args, "sweep_seeds", None),
    }
    if args.command in EXPERIMENTS:
        overrides["experiment"] = args.command
    cfg = load_experiment_config(args.config, overrides)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / args.command

    if args.command == COMMAND_SWEEP:
        result = sweep(cfg, _log_progress)
        write_sweep(result, cfg, out)
        for name, value in result.medians.items():
            print(f"{name}\tmedian_rmse={value:.6g}")
        return EXIT_OK

    if args.command == COMMAND_VALIDATE:
        table = run_validation(cfg, out, _log_progress)
        print(table.to_string(index=False))
        failed = hard_failures(table)
        if failed:
            logger.error(f"Failed checks: {', '.join(failed)}")
            return EXIT_CHECK_FAILED
        return EXIT_OK

    report = run_experiment(cfg)
    write_report(report, out)
    for key, value in report.summary.items():
        print(f"{key}\t{value}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command, map AppError to exit status 2."""
    args = build_parser().parse_args(argv)
    try:
        get_config()
        setup_logging(level=args.log_level, log_file=args.log_file)
        with run_context(generate_run_id()):
            return _run(args)
    except AppError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
