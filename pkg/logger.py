# logger.py
"""
Logger Utility

Responsibilities:
- Provide the package-wide logger factory (all loggers live under "rgmusic")
- Configure console and file handlers with one shared format
- Support log level changes from the CLI or environment
- Prevent duplicate handlers when modules are re-imported
"""

import logging
import sys
from typing import Dict, Optional, Union


# -----------------------------
# Default configuration
# -----------------------------
ROOT_NAME = "rgmusic"
DEFAULT_LOG_LEVEL = logging.INFO
DEFAULT_LOG_FORMAT = "[%(levelname)s] %(asctime)s %(name)s: %(message)s"
DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _qualified(name: Optional[str]) -> str:
    if not name or name == ROOT_NAME:
        return ROOT_NAME
    if name.startswith(ROOT_NAME + "."):
        return name
    return f"{ROOT_NAME}.{name}"


def get_logger(
    name: Optional[str] = None,
    level: Optional[int] = None,
    log_to_file: Optional[str] = None,
) -> logging.Logger:
    """
    Create or retrieve a logger below the package root.

    Handlers are attached once, to the root "rgmusic" logger; module
    loggers propagate to it so a single set_log_level call reaches all.

    Args:
        name: Module name (usually __name__)
        level: Optional level for the package root
        log_to_file: Optional file path for an extra file handler

    Returns:
        Configured logging.Logger instance
    """
    root = logging.getLogger(ROOT_NAME)
    if not root.handlers:
        root.setLevel(DEFAULT_LOG_LEVEL)
        add_console_handler(root)
        root.propagate = False

    if level is not None:
        set_log_level(root, level)
    if log_to_file:
        add_file_handler(root, log_to_file)

    return logging.getLogger(_qualified(name))


# -----------------------------
# Utility functions
# -----------------------------
def set_log_level(logger: logging.Logger, level: Union[int, str]) -> None:
    """
    Dynamically update log level for a logger and its handlers.
    """
    if isinstance(level, str):
        level = get_log_levels().get(level.upper(), DEFAULT_LOG_LEVEL)
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


def add_file_handler(logger: logging.Logger, file_path: str, level: int = logging.NOTSET) -> None:
    """
    Add a file handler to an existing logger.
    """
    formatter = logging.Formatter(DEFAULT_LOG_FORMAT, datefmt=DEFAULT_DATE_FORMAT)
    file_handler = logging.FileHandler(file_path)
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)


def add_console_handler(logger: logging.Logger, level: int = logging.NOTSET) -> None:
    """
    Add a stderr handler to an existing logger (stdout is kept for reports).
    """
    formatter = logging.Formatter(DEFAULT_LOG_FORMAT, datefmt=DEFAULT_DATE_FORMAT)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)


def get_log_levels() -> Dict[str, int]:
    """
    Return a dictionary of available logging levels.
    """
    return {
        "CRITICAL": logging.CRITICAL,
        "ERROR": logging.ERROR,
        "WARNING": logging.WARNING,
        "INFO": logging.INFO,
        "DEBUG": logging.DEBUG,
        "NOTSET": logging.NOTSET,
    }
