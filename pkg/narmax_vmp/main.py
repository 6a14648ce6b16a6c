"""
Command-line entry point for online VMP identification of polynomial NARMAX systems.
"""

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Configure logging first
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)

from cli.commands import (  # noqa: E402
    EXIT_INPUT_ERROR,
    cmd_experiment,
    cmd_generate,
    cmd_identify,
    cmd_plot,
    cmd_simulate,
)
from estimator.errors import ConfigurationError  # noqa: E402
from experiments.plotting import METRICS  # noqa: E402
from settings import Settings  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log per-step debug output")

    parser = argparse.ArgumentParser(
        prog="narmax-vmp",
        description="Online variational identification of polynomial NARMAX systems",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    identify = subparsers.add_parser("identify", parents=[common], help="Identify a model from a t,u,y CSV")
    identify.add_argument("data", help="CSV with header t,u,y")
    identify.add_argument("--config", help="Identification config JSON")
    identify.add_argument("--out", default="checkpoint.json", help="Checkpoint path")
    identify.add_argument("--predictions", help="One-step prediction CSV path")
    identify.add_argument("--trace", help="Free-energy trace CSV path")

    sim = subparsers.add_parser("simulate", parents=[common], help="Free-run a checkpointed model")
    sim.add_argument("checkpoint", help="Checkpoint JSON written by identify")
    sim.add_argument("inputs", help="CSV with a u column")
    sim.add_argument("--config", help="Config JSON (divergence section is used)")
    sim.add_argument("--out", default="simulation.csv", help="Output CSV path")

    experiment = subparsers.add_parser("experiment", parents=[common], help="Run an experiment plan")
    experiment.add_argument("plan", nargs="?", help="Experiment plan JSON")
    experiment.add_argument("--preset", choices=["experiment1", "experiment1_prediction", "experiment2"])
    experiment.add_argument("--out", default="results", help="Output directory")
    experiment.add_argument("--jobs", type=int, help="Worker threads (default NARMAX_VMP_JOBS or 1)")
    experiment.add_argument("--seed", type=int, help="Base seed (default NARMAX_VMP_SEED or 0)")
    experiment.add_argument("--db", help="Results database URL (default RESULTS_DATABASE_URL)")
    experiment.add_argument("--from-db", type=int, metavar="EXPERIMENT_ID",
                            help="Rebuild outputs of a stored experiment instead of running one")

    plot = subparsers.add_parser("plot", parents=[common], help="Chart an aggregates CSV as SVG")
    plot.add_argument("aggregates", help="aggregates.csv written by experiment")
    plot.add_argument("--out", default="plot.svg", help="Output SVG path")
    plot.add_argument("--metric", choices=list(METRICS), default="rms_simulation")
    plot.add_argument("--failures", action="store_true", help="Add the failure-proportion panel")
    plot.add_argument("--x-label", default="sweep value")

    generate = subparsers.add_parser("generate", parents=[common], help="Write benchmark t,u,y data")
    generate.add_argument("--out", default="data.csv", help="Output CSV path")
    generate.add_argument("--length", type=int, default=1024)
    generate.add_argument("--noise-std", type=float, default=0.02)
    generate.add_argument("--seed", type=int, help="Seed (default NARMAX_VMP_SEED or 0)")
    generate.add_argument("--system-out", help="Write the true coefficients as JSON")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        settings = Settings.from_env()
    except ConfigurationError as e:
        logger.error(f"Invalid environment: {e}")
        return EXIT_INPUT_ERROR

    if args.quiet:
        level = logging.WARNING
    elif args.verbose:
        level = logging.DEBUG
    else:
        level = settings.logging_level
    logging.getLogger().setLevel(level)

    logger.info(f"Running {args.command}")

    if args.command == "identify":
        return cmd_identify(args.data, args.out, args.config, args.predictions, args.trace)
    if args.command == "simulate":
        return cmd_simulate(args.checkpoint, args.inputs, args.out, args.config)
    if args.command == "experiment":
        return cmd_experiment(
            args.out,
            plan_path=args.plan,
            preset=args.preset,
            jobs=args.jobs if args.jobs is not None else settings.jobs,
            seed=args.seed,
            default_seed=settings.seed,
            database_url=args.db or settings.results_database_url,
            sql_echo=settings.sql_echo,
            stored_experiment=args.from_db,
        )
    if args.command == "plot":
        return cmd_plot(args.aggregates, args.out, args.metric, args.failures, args.x_label)
    return cmd_generate(
        args.out,
        length=args.length,
        noise_std=args.noise_std,
        seed=args.seed if args.seed is not None else settings.seed,
        system_path=args.system_out,
    )


if __name__ == "__main__":
    sys.exit(main())
