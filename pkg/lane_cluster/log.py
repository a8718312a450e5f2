"""
Logging helpers.

Library modules call get_logger(__name__); only the CLI installs a handler.
Records go to stderr so that files written by the CLI stay deterministic.
"""

from __future__ import annotations

import logging
import sys

ROOT_LOGGER = "lane_cluster"

_FORMAT = "%(levelname)s %(name)s: %(message)s"


def get_logger(name: str) -> logging.Logger:
    if not name.startswith(ROOT_LOGGER):
        name = f"{ROOT_LOGGER}.{name}"
    return logging.getLogger(name)


def configure(verbose: int = 0, quiet: bool = False) -> None:
    """Install a single stderr handler on the package logger."""
    if quiet:
        level = logging.ERROR
    elif verbose > 0:
        level = logging.DEBUG
    else:
        level = logging.WARNING

    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_FORMAT))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
