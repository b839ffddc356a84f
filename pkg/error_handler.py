# error_handler.py
"""
Error Handler

Responsibilities:
- Define the exception hierarchy shared by the numerical modules
- Categorize errors for structured handling and CLI exit codes
- Provide a safe execution wrapper for Monte Carlo trials
"""

import traceback
from typing import Any, Callable, Dict, Optional, Type

from logger import get_logger

log = get_logger(__name__)


# -----------------------------
# Exception hierarchy
# -----------------------------
class RobustSpikeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RobustSpikeError):
    """Invalid configuration value, file or flag."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if line is not None:
            where = f" (line {line})"
        super().__init__(f"{message}{where}")
        self.key = key
        self.line = line


class FormatError(RobustSpikeError):
    """Malformed snapshot file."""

    def __init__(self, message: str, offset: Optional[int] = None, expected: Optional[int] = None):
        parts = [message]
        if offset is not None:
            parts.append(f"at byte offset {offset}")
        if expected is not None:
            parts.append(f"expected {expected} bytes")
        super().__init__(", ".join(parts))
        self.offset = offset
        self.expected = expected


class DomainError(RobustSpikeError, ValueError):
    """Argument outside the domain of a function (precondition violated)."""


class NumericalError(RobustSpikeError):
    """A numerical procedure failed."""


class ConvergenceError(NumericalError):
    """An iteration hit its budget before reaching tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class InsideSupportError(NumericalError):
    """δ(x) requested at a point inside the limiting support."""

    def __init__(self, x: float, message: str = "no admissible real root, x lies inside the support"):
        super().__init__(f"{message}: x={x:.6g}")
        self.x = x


class BracketError(NumericalError):
    """A scalar equation has no sign change on its admissible bracket."""


class ValidityError(NumericalError):
    """Finite-sample quantity past the validity region (non-positive denominator)."""


# -----------------------------
# Error categorization
# -----------------------------
ERROR_CATEGORIES: Dict[str, Type[Exception]] = {
    "ConfigError": ConfigError,
    "FormatError": FormatError,
    "DomainError": DomainError,
    "ConvergenceError": ConvergenceError,
    "InsideSupportError": InsideSupportError,
    "BracketError": BracketError,
    "ValidityError": ValidityError,
    "NumericalError": NumericalError,
    "ValueError": ValueError,
    "Exception": Exception,
}

EXIT_CODES: Dict[str, int] = {
    "ConfigError": 2,
    "FormatError": 2,
    "DomainError": 2,
    "ConvergenceError": 3,
    "InsideSupportError": 3,
    "BracketError": 3,
    "ValidityError": 3,
    "NumericalError": 3,
}


def categorize_error(e: BaseException) -> str:
    """
    Categorize an exception into a known error type string.
    """
    for name, exc_type in ERROR_CATEGORIES.items():
        if isinstance(e, exc_type):
            return name
    return "UnknownError"


def exit_code_for(e: BaseException) -> int:
    """
    CLI exit code: 2 for configuration/input errors, 3 for numerical failure.
    """
    return EXIT_CODES.get(categorize_error(e), 1)


# -----------------------------
# Safe execution wrapper
# -----------------------------
def safe_call(fn: Callable[..., Any], *args, **kwargs) -> Optional[Any]:
    """
    Executes a function safely, logs numerical failures, and returns None on failure.

    Only package errors are swallowed; programming errors propagate.
    """
    try:
        return fn(*args, **kwargs)
    except RobustSpikeError as e:
        name = getattr(fn, "__name__", None) or getattr(getattr(fn, "func", None), "__name__", repr(fn))
        log.warning(f"[safe_call] {categorize_error(e)} in {name}: {e}")
        log.debug(traceback.format_exc())
        return None
