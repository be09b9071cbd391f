"""Command-line entry point: ``nanotorus <command> [--config F] [--out D]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .sweep import (EXIT_CONFIG, EXIT_SOLVER, ConfigError, SweepSpec, analyze,
                    load_config, run_sweep)

# subcommand -> table it produces
COMMANDS = {
    "dos": "dos",
    "transmission": "transmission",
    "current": "current",
    "angle-scan": "angle_scan",
    "flux-scan": "flux_scan",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanotorus",
        description="NEGF transport through a carbon nanotorus with two metallic leads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "analyze"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value sweep configuration")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--seedless", action="store_true",
                       help="assert that no random numbers are used (always true)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = load_config(args.config) if args.config else SweepSpec()
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.command == "analyze":
            sys.stdout.write(analyze(args.out, spec))
            return 0
        spec = replace(spec, outputs=(COMMANDS[args.command],))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER if args.command == "analyze" else EXIT_CONFIG

    manifest = run_sweep(spec, args.out, workers=args.workers)
    for line in manifest.failures:
        print(f"failed: {line}", file=sys.stderr)
    print(f"wrote {', '.join(sorted(manifest.files))} to {args.out} "
          f"({manifest.elapsed_s:.1f} s)")
    return manifest.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
