"""Command-line entry point: ``mpddsim {ber,mse,isac,channel-dump,optimize}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .arrays import InvalidInputError
from .channel import DegenerateChannelError, DelaySpreadError
from .config import EXPERIMENTS, ConfigError, load
from .io import write_csv
from .metasurfaces import GeometryError
from .pda import NumericalFailure

log = logging.getLogger("mpddsim")

# problems the configuration could have prevented vs. failures during the run
CONFIG_ERRORS = (ConfigError, DelaySpreadError, GeometryError, InvalidInputError)
NUMERIC_ERRORS = (NumericalFailure, DegenerateChannelError, FloatingPointError,
                  np.linalg.LinAlgError)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpddsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML experiment file")
        p.add_argument("--seed", type=int, help="master seed (overrides experiment.seed)")
        p.add_argument("--out", type=Path, help="CSV path (overrides output.path)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. sim.layers=3 (repeatable)")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command: str, cfg, threads: int, out: Path) -> Path:
    if command in ("ber", "isac"):
        points = experiments.run_ber_experiment(cfg, threads=threads, label=command)
    elif command == "mse":
        points = experiments.run_mse_experiment(cfg, threads=threads)
    elif command == "channel-dump":
        grids, points = experiments.channel_dump(cfg)
        np.savez(out.with_suffix(".npz"), **{k.replace("/", "_"): v for k, v in grids.items()})
    else:
        points = experiments.optimizer_trace(cfg)
    return write_csv(points, out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load(args.config, overrides, kind=args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output.path)
    try:
        path = run(args.command, cfg, args.threads, out)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
