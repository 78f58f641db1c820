"""Command-line front end.

Exit status: 0 on success, 1 when an invariant or oracle check fails,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import ConfigError, load_config
from .experiments import cmd_dynamics, cmd_memory, cmd_nonlinearity, cmd_verify


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oscrc",
        description=(
            "Simulate two coupled driven-dissipative quantum oscillators and "
            "evaluate them as a reservoir computer."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("nonlinearity", "sweep the drive amplitude and record neuron responses"),
        ("dynamics", "time-resolved photon numbers for the configured cases"),
        ("memory", "delayed-recall capacity over the dissipation grid"),
        ("verify", "run the numerical verification suite"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the experiment config file")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--seed", type=int, help="random seed (overrides [sweep] seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.out is not None:
            config = dataclasses.replace(config, out_dir=args.out)
        if args.seed is not None:
            config = dataclasses.replace(
                config,
                seed=args.seed,
                resolved={**config.resolved, "sweep.seed": str(args.seed)},
            )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "nonlinearity":
            paths = cmd_nonlinearity(config, threads=args.threads)
        elif args.command == "dynamics":
            paths = cmd_dynamics(config)
        elif args.command == "memory":
            paths = cmd_memory(config)
        else:
            report = cmd_verify(config)
            return 0 if report.all_passed else 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
