"""
Renewal SMC - Command-line entry point
Fits, projects, scores and simulates renewal epidemic models
"""
import argparse
import logging
import os
import sys
import warnings
from typing import List, Optional

# Add current directory to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from pydantic import ValidationError

from inference.core import ConvergenceWarning, DataError, RenewalError
from inference.pipeline import COMMANDS, RenewalPipeline
from utils.config import load_config

logger = logging.getLogger("run_renewal")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NOT_CONVERGED = 2
EXIT_DATA_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Sequential Monte Carlo inference for renewal epidemic models")
    parser.add_argument("--config", help="JSON run configuration merged over the defaults")
    parser.add_argument("--data", help="CSV with columns date,local_cases[,imported_cases]")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="root seed (overrides seed)")
    parser.add_argument("--command", choices=COMMANDS, default="fit", help="what to run")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("always", ConvergenceWarning)

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output"] = {"directory": args.out}

    try:
        config = load_config(args.config, overrides)
        result = RenewalPipeline(config, args.data).process_command(args.command)
    except DataError as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA_ERROR
    except (RenewalError, ValidationError, FileNotFoundError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE

    if not result["converged"]:
        logger.warning(result["message"])
        return EXIT_NOT_CONVERGED
    if not result["success"]:
        logger.error(result["message"])
        return EXIT_FAILURE
    logger.info(result["message"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
