"""Command line entry point.

    rom-apod run <config-file> [--out DIR] [--no-reference] [--seed N]
    rom-apod check <config-file>

Exit code 0 on success, nonzero with a message on any error.  The
ROM_APOD_LOG environment variable sets the log level (debug, info, ...).
"""

import argparse
import logging
import os
import sys

from .config import ConfigError, load_config


def _setup_logging() -> None:
    level = os.environ.get("ROM_APOD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rom-apod",
                                     description="Reduced-order advection-diffusion "
                                                 "experiments with adaptive POD bases")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured methods and write results")
    p_run.add_argument("config", help="path to a key=value config file")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--no-reference", action="store_true",
                       help="skip the full-order reference run and error columns")
    p_run.add_argument("--seed", type=int, default=None,
                       help="random seed (overrides config)")

    p_check = sub.add_parser("check", help="validate a config file and exit")
    p_check.add_argument("config", help="path to a key=value config file")

    args = parser.parse_args(argv)
    _setup_logging()

    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "check":
        print(f"ok: {args.config}")
        return 0

    from .experiment import run_experiment
    try:
        rc = run_experiment(cfg, out_dir=args.out,
                            reference=False if args.no_reference else None,
                            seed=args.seed)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if rc != 0:
        print("warning: at least one method was aborted by a solver failure",
              file=sys.stderr)
    return rc


if __name__ == "__main__":
    sys.exit(main())
