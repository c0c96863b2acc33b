import argparse
import logging
import os
import sys
from logging.handlers import RotatingFileHandler

# Add parent directory to sys.path to allow imports from app
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from app.logic.errors import ConfigError
from app.services.experiment_config import load_experiment_config

logger = logging.getLogger(__name__)

SUBCOMMANDS = {
    "scaling": "scaling",
    "counterexamples": "counterexamples",
    "flatnorm": "flatnorm",
    "constraint-audit": "constraint_audit",
}


def setup_logging(log_file: str = "slip_lattice.log", level: int = logging.INFO) -> None:
    log_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    file_handler = RotatingFileHandler(log_file, maxBytes=10*1024*1024, backupCount=5)
    file_handler.setFormatter(log_formatter)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(log_formatter)

    logging.basicConfig(level=level, handlers=[file_handler, console_handler], force=True)

    # Reduce third-party logging verbosity
    logging.getLogger('multiprocess').setLevel(logging.WARNING)
    logging.getLogger('sqlalchemy.engine').setLevel(logging.WARNING)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slip-lattice",
        description="Dislocation energies on the triangular lattice: scaling sweeps and diagnostics",
    )
    parser.add_argument("--log-file", default="slip_lattice.log", help="rotating log file")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="experiment config JSON (defaults to data/experiment_config.json)")
        p.add_argument("--out", help="output path (CSV, or JSON for counterexamples)")
        p.add_argument("--threads", type=int, help="worker processes for the epsilon sweep")
        p.add_argument("--db", help="SQLite file for the run ledger")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file, logging.DEBUG if args.verbose else logging.INFO)

    # Imported here so that --help stays fast
    from app.services.engine import run_experiment

    try:
        config = load_experiment_config(args.config)
        config = config.model_copy(update={"experiment": SUBCOMMANDS[args.command]})
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {args.threads}")
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2

    try:
        result = run_experiment(config, out_path=args.out, threads=args.threads, db_path=args.db)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return 1
    logger.info(f"Summary: {result['summary']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
