"""Command-line entry point: ``photonstat run|figure|validate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .experiments import FIGURES, default_workers, figure_configs, run_experiment, run_figure_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("photonstat")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _grid_count(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("grid must be at least 2")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="parallel workers (default: $PHOTONSTAT_WORKERS or 1)")
    common.add_argument("--seed", type=int, default=None, help="base seed for trajectory runs")
    common.add_argument("--grid", type=_grid_count, default=None, help="points per sweep axis")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="photonstat",
                                     description="Photon statistics of a pumped two-emitter dimer.")
    parser.add_argument("--version", action="version", version=f"photonstat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment from a config file")
    run.add_argument("config", help="config file, results CSV or JSON sidecar")
    run.add_argument("--out", default=None,
                     help="output CSV (default: the config's output key, else stdout)")
    run.add_argument("--no-sidecar", action="store_true", help="skip the JSON sidecar")

    fig = sub.add_parser("figure", parents=[common], help="run a figure preset")
    fig.add_argument("figure_id", choices=FIGURES)
    fig.add_argument("--out", default=None, help="output directory (default: stdout)")
    fig.add_argument("--no-sidecar", action="store_true", help="skip the JSON sidecar")

    val = sub.add_parser("validate", parents=[common], help="check a config file and print it resolved")
    val.add_argument("config")
    return parser


def _resolve(args):
    cfg = load_config(args.config)
    if args.grid is not None:
        cfg = cfg.with_grid(args.grid)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _dispatch(args) -> int:
    workers = default_workers() if args.workers is None else args.workers
    if args.command == "validate":
        cfg = _resolve(args)
        sys.stdout.write(cfg.to_text())
        return EXIT_OK
    if args.command == "run":
        cfg = _resolve(args)
        out = args.out or cfg.output
        table = run_experiment(cfg, workers=workers, write=False)
        if out:
            table.write(out, sidecar=not args.no_sidecar)
            log.info("wrote %s", out)
        else:
            sys.stdout.write(table.to_csv())
        return EXIT_OK
    grid = 64 if args.grid is None else args.grid
    seed = 0 if args.seed is None else args.seed
    log.info("figure %s: %d configuration(s)", args.figure_id,
             len(figure_configs(args.figure_id, grid, seed)))
    table = run_figure_suite(args.figure_id, grid=grid, seed=seed, workers=workers,
                             out_dir=args.out, sidecar=not args.no_sidecar)
    if args.out is None:
        sys.stdout.write(table.to_csv())
    else:
        log.info("wrote %s", Path(args.out) / f"{args.figure_id}.csv")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches the config code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="photonstat: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"photonstat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"photonstat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
