"""Logging setup for the command-line interface."""

import logging

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def setup_logging(verbose: bool = False) -> None:
    """
    Configure root logging for a CLI run.

    Args:
        verbose: Log DEBUG detail instead of warnings only
    """
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
