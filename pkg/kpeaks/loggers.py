"""Module for logging in kpeaks."""
import logging
from typing import Optional


LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _attach(target: logging.Logger, handler: logging.Handler) -> None:
    handler.setLevel(logging.NOTSET)
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT))
    target.addHandler(handler)


def setup_logging(log_file: Optional[str], verbose: bool) -> None:
    """Set up the kpeaks logger.

    Handlers from an earlier run in the same process are replaced.
    """
    kpeaks_logger = logging.getLogger("kpeaks")
    kpeaks_logger.setLevel(logging.DEBUG)
    for handler in list(kpeaks_logger.handlers):
        kpeaks_logger.removeHandler(handler)
        handler.close()
    if verbose:
        _attach(kpeaks_logger, logging.StreamHandler())
    if log_file:
        _attach(kpeaks_logger, logging.FileHandler(log_file, encoding="utf-8"))
