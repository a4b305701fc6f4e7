"""Command-line entry point: run, validate, list-experiments, version."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import ConfigError, load_config


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stnosense", description="STNO biosensor array simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "execute an experiment config"), ("validate", "parse a config only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", metavar="DIR", help="output directory (default: config 'output')")
        p.add_argument("--quiet", action="store_true")
    sub.add_parser("list-experiments", help="list experiment kinds")
    sub.add_parser("version", help="print the package version")
    return ap


def cli_main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return 2 if exc.code not in (0, None) else 0

    if args.command == "version":
        print(__version__)
        return 0
    if args.command == "list-experiments":
        from .experiments import DESCRIPTIONS
        for kind, text in DESCRIPTIONS.items():
            print(f"{kind:18s} {text}")
        return 0

    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        ap.print_usage(sys.stderr)
        print(f"stnosense: error: config not found: {args.config}", file=sys.stderr)
        return 2
    except (ConfigError, OSError) as exc:
        print(f"stnosense: error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(args.out)

    if args.command == "validate":
        if not args.quiet:
            print(f"ok: {cfg.kind} (seed {cfg.seed})")
        return 0

    from .experiments import ExperimentError, run_experiment
    try:
        record = run_experiment(cfg)
    except ExperimentError as exc:
        print(f"stnosense: error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(json.dumps({"run_id": record.run_id, "directory": record.directory, "files": record.files}, indent=2))
    return 0


def main() -> None:
    sys.exit(cli_main())
