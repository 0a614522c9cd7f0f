"""
Robust Huber Lasso - Main Entry Point

Command-line front end for the l1-penalized Huber M-estimator (augmented Lasso):
synthetic data, fitting, design-condition checks and the Monte Carlo study.
"""

import argparse
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

from commands import setup_commands

# Load environment variables
load_dotenv()

# Constants
OUT_DIR = os.getenv("RLASSO_OUT_DIR", "results")
MASTER_SEED = os.getenv("RLASSO_MASTER_SEED", "20190101")
REPS = os.getenv("RLASSO_REPS")
THREADS = os.getenv("RLASSO_THREADS", "1")
DEBUG = os.getenv("RLASSO_DEBUG", "").strip().lower() in ("1", "true", "yes", "on")


def _as_int(name: str, value):
    try:
        return int(value)
    except (TypeError, ValueError):
        print(f"ERROR: {name} must be an integer, got '{value}'", file=sys.stderr)
        return None


def validate_environment():
    """Validate the environment settings; returns the parsed settings or None"""
    master_seed = _as_int("RLASSO_MASTER_SEED", MASTER_SEED)
    threads = _as_int("RLASSO_THREADS", THREADS)
    if master_seed is None or threads is None:
        return None
    if threads < 1:
        print(f"ERROR: RLASSO_THREADS must be >= 1, got {threads}", file=sys.stderr)
        return None

    reps = None
    if REPS:
        reps = _as_int("RLASSO_REPS", REPS)
        if reps is None:
            return None
        if reps < 1:
            print(f"ERROR: RLASSO_REPS must be >= 1, got {reps}", file=sys.stderr)
            return None

    out_dir = Path(OUT_DIR)
    if out_dir.exists() and not out_dir.is_dir():
        print(f"ERROR: RLASSO_OUT_DIR '{out_dir}' exists and is not a directory", file=sys.stderr)
        return None

    if DEBUG:
        print("WARNING: RLASSO_DEBUG is on; every solver sweep checks monotone descent.", file=sys.stderr)

    return {"out_dir": str(out_dir), "master_seed": master_seed, "reps": reps, "threads": threads, "debug": DEBUG}


def create_parser():
    """Create the argument parser with every subcommand registered"""
    parser = argparse.ArgumentParser(
        prog="rlasso",
        description="Sparse regression with adversarially corrupted labels (augmented Lasso / Huber)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    setup_commands(subparsers)
    return parser


def main(argv=None):
    """Main function; returns the process exit status"""
    settings = validate_environment()
    if settings is None:
        return 1

    args = create_parser().parse_args(argv)
    try:
        return args.handler(args, settings)
    except (ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
