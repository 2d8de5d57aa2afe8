#!/usr/bin/env python3

import argparse
import logging
import sys

from config_loader import ConfigError, parse_config
from experiments import run_experiment
from models import ExperimentKind, RunConfig
from utils import setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Train and verify constrained Langevin optimizers on spiral classification"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        sub = subparsers.add_parser(kind.value, help=f"Run a {kind.value} experiment")
        sub.add_argument("config", help="Path to a run config (.cfg)")
        seeds = sub.add_mutually_exclusive_group()
        seeds.add_argument("--seed", type=int, default=None, help="Run a single seed")
        seeds.add_argument("--seeds", type=int, default=None, metavar="N", help="Run seeds 0..N-1")
        sub.add_argument("--out", default=None, metavar="DIR", help="Output directory")
        sub.add_argument("--threads", type=int, default=None, metavar="N", help="Worker threads")
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed is not None:
        config.seeds = [args.seed]
    elif args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError([f"--seeds must be at least 1, got {args.seeds}"])
        config.seeds = list(range(args.seeds))
    if args.out:
        config.out_dir = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError([f"--threads must be at least 1, got {args.threads}"])
        config.threads = args.threads
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = ExperimentKind(args.command)

    try:
        config = parse_config(args.config, experiment)
        config = apply_overrides(config, args)
    except ConfigError as e:
        # logging is not configured yet; errors go straight to stderr
        print("Configuration errors:", file=sys.stderr)
        for err in e.errors:
            print(f"  - {err}", file=sys.stderr)
        return 1

    log_file = setup_logging(experiment.value.replace("-", "_"), config.out_dir)
    logging.info(f"Logging to {log_file}")
    logging.info(f"Running {experiment.value} from {args.config} → {config.out_dir}")
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
