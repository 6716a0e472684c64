"""
BGN command line - Main Entry Point
Train, benchmark and study binarized graph attention networks.
"""

import logging
import os
import sys

from commands.base import default_registry
from config.settings import LOG_LEVEL_ENV


def configure_logging() -> None:
    level = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand and return its exit status"""
    configure_logging()
    result = default_registry().execute(argv)
    if not result.success:
        print(f"error: {result.error}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
