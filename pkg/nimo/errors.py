"""Exception hierarchy shared by every nimo module."""

from typing import Optional


class NimoError(Exception):
    """Base class for all errors raised by nimo."""


class NonFinite(NimoError):
    pass


class ConstantColumn(NimoError):
    def __init__(self, column: int) -> None:
        super().__init__(f"column {column} has zero standard deviation")
        self.column = column


class NotSpd(NimoError):
    pass


class DimensionMismatch(NimoError):
    pass


class IndexOutOfRange(NimoError):
    pass


class StaleCache(NimoError):
    pass


class Diverged(NimoError):
    def __init__(self, iteration: int, message: Optional[str] = None) -> None:
        super().__init__(message or f"training diverged at iteration {iteration}")
        self.iteration = iteration


class MaxIterations(NimoError):
    pass


class UnknownSetting(NimoError):
    pass


class InsufficientRows(NimoError):
    pass


class ParseError(NimoError):
    def __init__(self, row: int, column: str, value: str) -> None:
        super().__init__(f"cannot parse {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.value = value


class MissingColumn(NimoError):
    def __init__(self, name: str) -> None:
        super().__init__(f"column {name!r} not found in header")
        self.name = name


class ConfigError(NimoError):
    pass


class UnknownTableRow(NimoError):
    pass


class ExperimentError(NimoError):
    """Wraps a failure inside one method/repetition cell of an experiment."""

    def __init__(self, method: str, repetition: int, cause: Exception) -> None:
        super().__init__(f"{method} failed in repetition {repetition}: {cause}")
        self.method = method
        self.repetition = repetition
        self.cause = cause
