"""Command line for the LEO positioning-and-communication experiments.

    python leo_ipac.py crb-sweep --scenario my.scenario --out results/
"""
import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from ipac.errors import ConfigurationError, IpacError
from ipac.harness import EXPERIMENTS, Scenario, load_scenario, run_experiment

logger = logging.getLogger("leo_ipac")

# Subcommand help text
DESCRIPTIONS = {
    "se-sweep": "spectral efficiency of outdated-CSI vs location-based beamforming",
    "crb-sweep": "positioning CRB over array size, constellation size and transmission mode",
    "rmse-sweep": "ML positioning RMSE vs delay accuracy under satellite position mismatch",
    "link-budget": "attenuation terms of the zenith link",
    "doppler": "worst-case Doppler and Doppler rate per altitude and carrier",
    "pass-profile": "delay, Doppler and timing advance over a satellite pass",
}


class UsageErrorParser(argparse.ArgumentParser):
    # Bad flags and unknown experiments are configuration errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = UsageErrorParser(prog="leo_ipac", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sub = commands.add_parser(name, help=DESCRIPTIONS.get(name, name))
        sub.add_argument("--scenario", help="key = value scenario file (defaults otherwise)")
        sub.add_argument("--out", default="results", help="output directory")
        sub.add_argument("--seed", type=int, help="master seed")
        sub.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
        sub.add_argument("--workers", type=int, help="parallel workers")
    return parser


def resolve_scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["se_trials"] = args.trials
        overrides["rmse_trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    return replace(scenario, **overrides) if overrides else scenario


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        scenario = resolve_scenario(args)
        paths = run_experiment(args.experiment, scenario, args.out)
    except ConfigurationError as exc:
        logger.error("configuration error: %s", exc)
        return 1
    except (IpacError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        logger.error("%s failed: %s", args.experiment, exc)
        return 2

    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
