"""Exception hierarchy shared across the package."""


class RomaError(Exception):
    """Base class for all package errors."""


class DimensionError(RomaError, ValueError):
    pass


class EmptyInputError(RomaError, ValueError):
    pass


class GridError(RomaError, ValueError):
    pass


class TypeMismatchError(RomaError, TypeError):
    pass


class DegenerateDataError(RomaError, ValueError):
    pass


class ConfigError(RomaError, ValueError):
    pass


class DataError(RomaError, ValueError):
    """Malformed user data; carries the offending row/column when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(RomaError, ArithmeticError):
    pass


class RegularizationTooSmall(NumericalError):
    pass


class SymmetryError(NumericalError):
    pass


class SaturatedModelError(NumericalError):
    pass


class TuningFailedError(NumericalError):
    pass


class DegenerateSpectrumError(NumericalError):
    pass


class DegenerateContrastError(NumericalError):
    pass


class VarianceEstimateWarning(UserWarning):
    pass
