"""Run every shipped experiment config and log the headline numbers.

Usage: python scripts/run_acceptance.py [--threads N] [--out-dir results] [--db results/ledger.db]
"""
import argparse
import glob
import logging
import os
import sys

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from app.logic.errors import ConfigError
from app.main import setup_logging
from app.services.engine import run_experiment
from app.services.experiment_config import load_experiment_config

logger = logging.getLogger("run_acceptance")

CONFIG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "../data/configs"))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--db", default=None)
    parser.add_argument("--only", nargs="*", help="config names without .json")
    args = parser.parse_args()
    setup_logging("acceptance.log")

    paths = sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json")))
    if args.only:
        paths = [p for p in paths if os.path.splitext(os.path.basename(p))[0] in args.only]

    failures = 0
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            config = load_experiment_config(path)
        except ConfigError as e:
            logger.error(f"{name}: {e}")
            failures += 1
            continue
        suffix = ".json" if config.experiment == "counterexamples" else ".csv"
        out = os.path.join(args.out_dir, name + suffix)
        try:
            result = run_experiment(config, out_path=out, threads=args.threads, db_path=args.db)
        except Exception as e:
            logger.error(f"{name} failed: {e}", exc_info=True)
            failures += 1
            continue
        logger.info(f"{name}: {result['summary']}")

    logger.info(f"Finished {len(paths)} configs, {failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
