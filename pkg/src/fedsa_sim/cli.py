"""Command-line entry point: ``fedsa-sim run|sweep <config>``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import DRIVERS, ConfigError, parse_config
from .data import DataError
from .runner import run_experiment, run_sweep

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_DATA_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsa-sim",
        description="Deterministic federated-learning simulator with "
        "simulated-annealing hyperparameter adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("config", help="YAML/JSON experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--driver", choices=DRIVERS, default=None, help="override the driver")
    run_p.add_argument("--output", default=None, help="override the output directory")

    sweep_p = sub.add_parser("sweep", help="run the temperature/cooling robustness grid")
    sweep_p.add_argument("config", help="YAML/JSON experiment config with a sweep section")
    sweep_p.add_argument("--output", default=None, help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = parse_config(args.config, seed=args.seed, driver=args.driver, output=args.output)
            result = run_experiment(cfg)
            final = result.summary["final"]
            print(f"run directory: {result.run_dir}")
            print(
                f"rounds={result.summary['total_rounds']} "
                f"final_loss={final['loss']:.6f} final_accuracy={final['accuracy']:.4f} "
                f"best_round={result.summary['best_round']}"
            )
        else:
            cfg = parse_config(args.config, output=args.output)
            result = run_sweep(cfg)
            print(f"sweep directory: {result.sweep_dir}")
            print(
                f"cells={len(result.summary['cells'])} "
                f"spread_of_cell_means={result.summary['spread_of_cell_means']:.4f} "
                f"max_cell_std={result.summary['max_cell_std']:.4f}"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
