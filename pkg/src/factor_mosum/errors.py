"""Exception hierarchy.

Two families are kept apart so front ends can map them to different exit
codes: bad input (``ValidationError``) versus a well-formed input on which the
numerics break down (``NumericalError``).
"""


class FactorMosumError(Exception):
    """Base class for all package errors."""


class ValidationError(FactorMosumError, ValueError):
    """Input violates a documented precondition."""


class IngestionError(ValidationError):
    """A panel or price file could not be parsed.

    ``row`` and ``column`` are 1-based positions in the source file when known.
    """

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(FactorMosumError, ArithmeticError):
    """A computation failed on numerically degenerate input."""
