"""Command line entry point: ``python -m cmab <command>``"""
import argparse
import dataclasses
import logging
import sys

from dku_config import DSSParameterError
from cmab import __version__
from cmab.constants import GRID_MULTIPLIERS
from cmab.harness import (
    ExperimentError,
    grid_search,
    horizon_sweep,
    run_experiment,
)
from cmab.params import get_run_config, load_config_file
from cmab.save import emit_grid_search, emit_results, emit_sweep


def _number_list(cast):
    def parse(text):
        try:
            values = [cast(item) for item in text.split(",") if item.strip()]
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from err
        if not values:
            raise argparse.ArgumentTypeError(f"Empty list: {text!r}")
        return values

    return parse


def _positive_int(text):
    try:
        value = int(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from err
    if value < 1:
        raise argparse.ArgumentTypeError(f"Should be at least 1: {value}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="python -m cmab",
        description=(
            "Simulate CMAB-RL and its baselines and write cumulative "
            "reward and regret curves"
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log at DEBUG level"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", required=True, help="Experiment YAML file"
    )
    common.add_argument(
        "--out", required=True, help="Directory the results are written to"
    )
    common.add_argument("--seed", type=int, help="Override the base seed")
    common.add_argument(
        "--reps", type=_positive_int, help="Override the repetition count"
    )
    common.add_argument(
        "--workers",
        type=_positive_int,
        help="Override the number of worker processes",
    )

    commands.add_parser(
        "run", parents=[common], help="Run every algorithm of the config"
    )
    search = commands.add_parser(
        "grid-search",
        parents=[common],
        help="Select the confidence multiplier of each learning algorithm",
    )
    search.add_argument(
        "--multipliers",
        type=_number_list(float),
        default=list(GRID_MULTIPLIERS),
        help="Comma-separated multipliers (default: %(default)s)",
    )
    sweep = commands.add_parser(
        "sweep",
        parents=[common],
        help="Run the experiment at several horizons",
    )
    sweep.add_argument(
        "--horizons",
        type=_number_list(int),
        required=True,
        help="Comma-separated horizons",
    )
    return parser


def _load(args):
    config = get_run_config(load_config_file(args.config))
    overrides = {
        "seed": args.seed,
        "repetitions": args.reps,
        "workers": args.workers,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides.get("seed", 0) < 0:
        raise ValueError(f"Seed must be nonnegative: {args.seed}")
    return dataclasses.replace(config, **overrides)


def main(argv=None):
    """Run a command

    :param argv: Arguments, defaults to sys.argv[1:]
    :type argv: Sequence[str] | None

    :return: Exit code
    :rtype: int
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        config = _load(args)
        if args.command == "grid-search":
            report = grid_search(config, args.multipliers)
            emit_grid_search(report, args.out, config)
        elif args.command == "sweep":
            report = horizon_sweep(config, args.horizons)
            emit_sweep(report, args.out, config)
        else:
            emit_results(run_experiment(config), args.out, config)
    except (DSSParameterError, ExperimentError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0
