"""
ergodiclab - Command line entry point for reproducible equidistribution experiments

    ergodiclab run <config.json> [--out DIR] [--threads N] [--assume-ergodic] [--check]
    ergodiclab suite <config.json>... [--out DIR] [--threads N] [--check]
    ergodiclab calibrate --space torus:2 --size N [--K] [--s] [--seed] [--repeats] [--mode]
    ergodiclab validate <config.json>
    ergodiclab history [--limit N]

Exit codes: 0 ok, 1 unexpected error, 2 config error, 3 numeric guard, 4 acceptance check failed.
"""

import argparse
import asyncio
import json
import sys
from typing import List, Optional

from agents.calibrator import CalibratorAgent
from agents.scheduler import ExperimentScheduler, suite_exit_code
from dynamics.measures import SpaceTag
from tools.config_loader import ConfigLoader
from tools.experiment_config import load_experiment_config
from utils.db import get_recent_runs, init_db
from utils.errors import ConfigError, ErgodicLabError, exit_code_for
from utils.logger import setup_application_logging, setup_logger

logger = setup_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergodiclab", description="Equidistribution experiments on tori and nilmanifolds")
    parser.add_argument("--log-level", default=None, help="Console log level (default from config)")
    parser.add_argument("--log-dir", default=None, help="Directory for log files; empty string disables them")
    parser.add_argument("--settings", default="config/config.yaml", help="Settings YAML file")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one experiment config")
    run.add_argument("config", help="Experiment config (JSON)")
    suite = sub.add_parser("suite", help="Run several experiment configs concurrently")
    suite.add_argument("configs", nargs="+", help="Experiment configs (JSON)")
    for p in (run, suite):
        p.add_argument("--out", default=None, help="Output root directory")
        p.add_argument("--threads", type=int, default=None, help="Worker threads for push-forwards")
        p.add_argument("--assume-ergodic", action="store_true", help="Allow cocycle runs over a non-minimal base")
        p.add_argument("--check", action="store_true", help="Exit 4 when a configured check fails")

    calibrate = sub.add_parser("calibrate", help="Noise floor of fresh Haar clouds")
    calibrate.add_argument("--space", required=True, help="torus:<d> or heisenberg")
    calibrate.add_argument("--size", type=int, required=True, help="Particles per cloud")
    calibrate.add_argument("--K", type=int, default=None, help="Frequency cutoff")
    calibrate.add_argument("--s", type=float, default=None, help="Decay exponent")
    calibrate.add_argument("--seed", type=int, default=0)
    calibrate.add_argument("--repeats", type=int, default=None)
    calibrate.add_argument("--mode", choices=["iid", "stratified"], default=None)

    validate = sub.add_parser("validate", help="Schema check only")
    validate.add_argument("config", help="Experiment config (JSON)")

    history = sub.add_parser("history", help="Recent runs from the ledger")
    history.add_argument("--limit", type=int, default=20)
    return parser


def _print_result(result) -> None:
    recorded = result.get("recorded") or {}
    payload = {
        "run_id": result.get("run_id"),
        "exit_code": result.get("exit_code", 0),
        "error": result.get("error") or None,
        "run_dir": recorded.get("run_dir"),
        "failed_checks": [c["name"] for c in result.get("checks", []) if not c["passed"]],
    }
    print(json.dumps(payload, indent=2))


def cmd_run(args, config: ConfigLoader) -> int:
    scheduler = ExperimentScheduler(config)
    result = scheduler.run(args.config, args.out, args.threads, args.assume_ergodic, args.check)
    _print_result(result)
    return result["exit_code"]


def cmd_suite(args, config: ConfigLoader) -> int:
    scheduler = ExperimentScheduler(config)
    results = asyncio.run(scheduler.run_suite(args.configs, args.out, args.threads, args.assume_ergodic, args.check))
    for result in results:
        _print_result(result)
    return suite_exit_code(results)


def cmd_calibrate(args, config: ConfigLoader) -> int:
    try:
        space = SpaceTag.parse(args.space)
    except ValueError as e:
        raise ConfigError(str(e), field_path="space") from e
    defaults = config.metric_defaults(space.dim)
    K = args.K if args.K is not None else defaults["K"]
    s = args.s if args.s is not None else defaults["s"]
    calibrator = CalibratorAgent(config)
    try:
        floor = calibrator.calibrate_noise_floor(space, args.size, K, s, args.seed, args.repeats, args.mode)
    except ValueError as e:
        raise ConfigError(str(e), field_path="calibrate") from e
    print(json.dumps({
        "space": str(space),
        "size": args.size,
        "K": K,
        "s": s,
        "seed": args.seed,
        "noise_floor": floor,
        "epsilon": calibrator.epsilon_factor * floor,
    }, indent=2))
    return 0


def cmd_validate(args, config: ConfigLoader) -> int:
    experiment = load_experiment_config(args.config)
    print(f"{args.config}: ok ({experiment.kind}, hash {experiment.config_hash()[:12]})")
    return 0


def cmd_history(args, config: ConfigLoader) -> int:
    ledger = config.get_setting("runtime.ledger_path")
    init_db(ledger)
    runs = get_recent_runs(args.limit, db_path=ledger)
    if not runs:
        print("No runs recorded yet")
        return 0
    for r in runs:
        wall = f"{r['wall_time']:.1f}s" if r["wall_time"] is not None else "-"
        print(f"{r['created_at']}  {r['run_id']:<48} {r['kind']:<16} {r['status']:<9} exit={r['exit_code']} {wall}")
    return 0


COMMANDS = {
    "run": cmd_run,
    "suite": cmd_suite,
    "calibrate": cmd_calibrate,
    "validate": cmd_validate,
    "history": cmd_history,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config = ConfigLoader(config_file=args.settings)

    log_dir = config.get_setting("runtime.log_dir", "logs") if args.log_dir is None else (args.log_dir or None)
    setup_application_logging(
        level=args.log_level or config.get_setting("runtime.log_level", "INFO"),
        log_dir=log_dir,
        log_file=config.get_setting("runtime.log_file", "ergodiclab.log"),
    )
    if not config.validate_config():
        logger.error("Settings failed validation")
        return 2

    try:
        return COMMANDS[args.command](args, config)
    except ErgodicLabError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
