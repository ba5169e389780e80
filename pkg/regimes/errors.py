"""
Exception Hierarchy

All errors raised by the package derive from RegimeError. Each family also
derives from the builtin exception callers would naturally catch, so
``except ValueError`` keeps working for bad arguments and bad data.

Each family carries its CLI exit code in ``exit_code``.
"""


class RegimeError(Exception):
    """Base class for every package error."""

    exit_code = 1


class ConfigurationError(RegimeError, ValueError):
    """Invalid configuration or argument (exit code 2)."""

    exit_code = 2


class CatalogError(ConfigurationError):
    """Assessment catalog or cost table breaks an invariant."""


class EnumerationSizeError(ConfigurationError):
    """Regime space of a discrete instance is too large to enumerate."""

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(
            f"regime space needs {count} evaluations, limit is {limit}"
        )


class DataError(RegimeError, ValueError):
    """Malformed or inconsistent input data (exit code 3)."""

    exit_code = 3


class DimensionError(DataError):
    """Vector or design has the wrong length."""


class InstanceError(DataError):
    """Discrete instance tables are not valid distributions."""


class NumericError(RegimeError, ArithmeticError):
    """Non-finite values or singular matrices (exit code 4)."""

    exit_code = 4


class EvaluationError(NumericError):
    """Regime evaluation is undefined, e.g. zero total IPW weight."""


class OracleError(RegimeError, RuntimeError):
    """Covariate oracle failed during deployment."""


def exit_code_for(exc: BaseException) -> int:
    """Return the CLI exit code for an exception."""
    if isinstance(exc, RegimeError):
        return exc.exit_code
    return 1
