"""``gkpsim`` command line: one subcommand per experiment type."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import runner
from .oscillator import TruncationError
from .runner import ConfigError

COMMANDS = {
    "prepare": runner.run_prepare,
    "scan": runner.run_scan,
    "tomography-state": runner.run_state_tomography,
    "tomography-process": None,
    "marginals": runner.run_marginals,
    "wigner": runner.run_wigner,
    "simulate": runner.run_simulation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkpsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML or JSON run document")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--shots", type=int, help="shots per point; 0 = exact")
        p.add_argument("--seed", type=int)
        p.add_argument("--noise", type=float, metavar="GAMMA",
                       help="motional dephasing rate in 1/s")
        p.add_argument("--fock-dim", type=int, dest="fock_dim")
        p.add_argument("--format", choices=runner.FORMATS)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"out": args.out, "shots": args.shots, "seed": args.seed,
                 "noise": args.noise, "fock_dim": args.fock_dim, "format": args.format}
    try:
        config = runner.load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "tomography-process":
            res = runner.run_process_tomography(config)
            results = runner.process_results(config, res)
        else:
            results = COMMANDS[args.command](config)
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    paths = runner.emit_results(results, config.output_dir, config.output_format)
    if results.summary:
        print(json.dumps(runner._jsonable(results.summary), indent=1, sort_keys=True))
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
