"""Logging Module.

Module which sets up the basic logging infrastructure for the application. The
level is read from the ``CYRANGE_LOG`` environment variable (``error``, ``info``
or ``debug``) unless a level is passed explicitly.
"""

import logging
import os
import sys
from typing import Optional

# logger formating
BRIEF_FORMAT = "%(levelname)s %(asctime)s - %(name)s: %(message)s"
VERBOSE_FORMAT = (
    "%(levelname)s|%(asctime)s|%(name)s|%(filename)s|"
    "%(funcName)s|%(lineno)d: %(message)s"
)
FORMAT_TO_USE = VERBOSE_FORMAT

# logger levels
DEBUG = logging.DEBUG
INFO = logging.INFO
WARN = logging.WARNING
ERROR = logging.ERROR
CRITICAL = logging.CRITICAL

ENV_VAR = "CYRANGE_LOG"
LEVELS = {"error": ERROR, "info": INFO, "debug": DEBUG}


def level_from_env(default: int = INFO) -> int:
    """Resolve the logging level from ``CYRANGE_LOG``.

    Parameters
    ----------
    default : int, optional
        The level used when the variable is unset or unrecognised.

    Returns
    -------
    int
        The logging level.
    """
    return LEVELS.get(os.environ.get(ENV_VAR, "").strip().lower(), default)


def get_logger(name=None, log_level: Optional[int] = None):
    """Set the basic logging features for the application.

    Parameters
    ----------
    name : str, optional
        The name of the logger. Defaults to ``None``
    log_level : int, optional
        The logging level. Defaults to the level named by ``CYRANGE_LOG``.

    Returns
    -------
    logging.Logger
        Returns a Logger object which is set with the passed in parameters.
    """
    level = level_from_env() if log_level is None else log_level
    logging.basicConfig(format=FORMAT_TO_USE, stream=sys.stderr, level=level)
    logger = logging.getLogger(name)
    logger.setLevel(level)
    return logger
