"""Exception hierarchy shared by every module.

The CLI maps the three families onto exit codes: configuration problems (2),
data problems (3) and numeric failures (4).
"""


class ElmError(Exception):
    """Base class for all errors raised by elmnet."""

    exit_code = 1


class ConfigError(ElmError, ValueError):
    exit_code = 2


class DataError(ElmError, ValueError):
    exit_code = 3


class NumericError(ElmError, ArithmeticError):
    exit_code = 4


class ShapeError(DataError):
    """Operand dimensions do not line up."""


class SingularSystemError(NumericError):
    """Cholesky factorization failed even after ridge escalation."""

    def __init__(self, message, last_ridge):
        super().__init__(message)
        self.last_ridge = last_ridge


class DegenerateTargetError(DataError):
    """Training labels contain a single class."""


class UnknownClassError(DataError):
    pass


class StratificationError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(DataError):
    pass


class UndefinedMetricError(NumericError):
    pass
