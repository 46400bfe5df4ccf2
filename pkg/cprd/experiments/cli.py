import argparse
import json
import logging
import sys

from cprd.core.errors import ConfigInvalid, IoFailure
from cprd.experiments.config import ExperimentConfig, ExperimentKind
from cprd.experiments.runner import run_experiment, sweep

# subcommand -> experiment kind it accepts
COMMANDS = {
    "simulate": ExperimentKind.GROWTH,
    "survival": ExperimentKind.SURVIVAL,
    "dl-check": ExperimentKind.DL,
    "gap-check": ExperimentKind.GAP,
    "percolate": ExperimentKind.PERCOLATION,
    "coupling-check": ExperimentKind.COUPLING,
    "recursion": ExperimentKind.RECURSION,
    "gw-check": ExperimentKind.GW,
    "oracle-check": ExperimentKind.ORACLE,
}

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config JSON file")
    parser.add_argument("--seed", type=int, help="root seed, overrides the config")
    parser.add_argument("--out", help="output directory, overrides the config")
    parser.add_argument("--replicas", type=int, help="number of replicas, overrides the config")
    parser.add_argument("--workers", type=int, help="worker processes, overrides the config")
    parser.add_argument("--log-level", default="INFO", choices=LOG_LEVELS)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cprd", description="Contact process with renewal dormancy experiments"
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        _add_common(commands.add_parser(name, help=f"run a {kind} experiment"))
    sweeper = commands.add_parser("sweep", help="run any experiment over a parameter grid")
    _add_common(sweeper)
    sweeper.add_argument(
        "--grid", required=True, help="JSON file mapping dotted config paths to lists of values"
    )
    return parser


def load_grid(path):
    try:
        with open(path, "r") as fh:
            grid = json.load(fh)
    except OSError as e:
        raise IoFailure(f"cannot read grid {path}: {e}") from e
    except ValueError as e:
        raise ConfigInvalid("grid", f"not valid JSON: {e}") from e
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ConfigInvalid("grid", "must map dotted paths to lists of values")
    return grid


def execute(args):
    config = ExperimentConfig.load(args.config).with_overrides(
        seed=args.seed, out=args.out, replicas=args.replicas, workers=args.workers
    )
    if args.command == "sweep":
        sweep(config, load_grid(args.grid))
        return
    expected = COMMANDS[args.command]
    if config.kind != expected:
        raise ConfigInvalid("kind", f"{args.command} runs {expected} experiments, got {config.kind}")
    run_experiment(config)


def main(argv=None):
    """Entry point of the cprd command, returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(
        format="%(asctime)s [%(levelname)s] %(message)s", level=getattr(logging, args.log_level)
    )
    try:
        execute(args)
    except ConfigInvalid as e:
        logging.error(f"Invalid config: {e}")
        return EXIT_USAGE
    except (IoFailure, ValueError, RuntimeError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
