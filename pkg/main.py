# main.py
"""
Main Application Entry Point

Command-line front end for the robust subspace estimation toolkit.

Responsibilities:
- Parse subcommands (spectrum, oneshot, mse, estimate) and flags
- Merge defaults, an optional config file and flag overrides (flags win)
- Configure logging from --log-level / --log-file
- Run the scenario and map failures onto exit codes (2 config/input, 3 numerical)
"""

import argparse
import sys
from typing import Any, Dict, List, Optional

import config
from error_handler import RobustSpikeError, categorize_error, exit_code_for
from harness import format_summary, run
from logger import add_file_handler, get_logger, set_log_level
from schema import ExperimentConfig, SCENARIO_ALIASES

log = get_logger(__name__)


def _method_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgmusic",
        description="Robust scatter estimation, spiked spectral analysis and robust G-MUSIC localization.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="base seed of the per-trial random streams")
    common.add_argument("--trials", type=int, help="Monte Carlo trials (per power level for mse)")
    common.add_argument("--workers", type=int, help="worker processes for independent trials")
    common.add_argument("--out", metavar="DIR", help="output directory for CSV files")
    common.add_argument("--method", type=_method_list, metavar="LIST", help="comma-separated localization methods")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--log-file", default=None, metavar="PATH", help="also log to this file")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenvalue histogram against the limiting density")
    sub.add_parser("oneshot", parents=[common], help="one realization of every localization function")
    sub.add_parser("mse", parents=[common], help="Monte Carlo MSE of the first angle over the power sweep")
    estimate = sub.add_parser("estimate", parents=[common], help="full pipeline on an RSPK1 or CSV snapshot file")
    estimate.add_argument("input", metavar="FILE", help="snapshot file (.csv or RSPK1 binary)")
    return parser


def collect_values(args: argparse.Namespace) -> Dict[str, Any]:
    """Defaults < config file < command-line flags."""
    file_values = config.load_config_file(args.config) if args.config else {}
    flags = {
        "scenario": SCENARIO_ALIASES[args.command],
        "seed": args.seed,
        "trials": args.trials,
        "workers": args.workers,
        "out": args.out,
        "method": args.method,
        "log_level": args.log_level,
        "log_file": args.log_file,
        "input": getattr(args, "input", None),
    }
    return config.merge(file_values, flags)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = collect_values(args)
        root = get_logger()
        set_log_level(root, values["log_level"])
        if values["log_file"]:
            add_file_handler(root, values["log_file"])
        cfg = ExperimentConfig.from_dict(values)
        result = run(cfg)
    except RobustSpikeError as e:
        log.error(f"{categorize_error(e)}: {e}")
        return exit_code_for(e)

    if cfg.scenario == "estimate":
        print(format_summary(result))
    else:
        for name, path in result.items():
            print(f"{name}: {path}")
    return 0


# -----------------------------
# Entry Point
# -----------------------------
if __name__ == "__main__":
    sys.exit(main())
