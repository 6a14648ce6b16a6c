"""
Exception hierarchy shared by the estimator, experiment and CLI layers.

Library code raises these; the harness and the CLI catch them at the
boundary and turn them into failed run records or exit codes.
"""

from typing import Any


class NarmaxError(Exception):
    """Base class for every error raised by this project."""
    pass


class ContractViolationError(NarmaxError, ValueError):
    """An operation was called with arguments outside its contract."""
    pass


class DegenerateBeliefError(NarmaxError, ValueError):
    """A belief would end up with invalid parameters (e.g. Gamma shape <= 0)."""
    pass


class NumericalConditioningError(NarmaxError, ArithmeticError):
    """A precision matrix could not be factorised reliably."""
    pass


class NonFiniteSignalError(NarmaxError, ValueError):
    """A NaN or infinite value reached the regressor pipeline."""
    pass


class UnstableSystemError(NarmaxError, ArithmeticError):
    """A generated benchmark system produced a diverging output."""
    pass


class ConfigurationError(NarmaxError, ValueError):
    """Invalid environment setting, JSON config or experiment plan."""
    pass


class InputFormatError(NarmaxError, ValueError):
    """Malformed input file. ``line_number`` is 1-based when known."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


def config_value(name: str, value: Any, kind: type) -> Any:
    """
    Convert a decoded JSON/env value to ``kind`` (int, float or bool).

    Integers accept integral floats and numeric strings; booleans must
    already be booleans.

    Raises:
        ConfigurationError: the value cannot be read as ``kind``
    """
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif not isinstance(value, bool):
        try:
            converted = kind(value)
            if kind is int and float(converted) != float(value):
                raise ValueError("not integral")
            return converted
        except (TypeError, ValueError, OverflowError):
            pass
    raise ConfigurationError(f"{name} must be {kind.__name__}, got {value!r}")
