"""Exception hierarchy shared by all modules.

The CLI maps ``DataError`` to exit code 3 and ``SolverError`` /
``TrainingError`` to exit code 4.
"""

from __future__ import annotations


class RoboAdviseError(Exception):
    """Base class for every error raised by this package."""


class DataError(RoboAdviseError):
    pass


class MissingCell(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class UnparseableDate(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class WrongAggregation(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class UniverseMismatch(DataError):
    pass


class InvalidSpec(DataError):
    pass


class PoolTooSmall(DataError):
    pass


class SpanTooShort(DataError):
    pass


class PathTooShort(DataError):
    pass


class ZeroVariance(DataError):
    pass


class SolverError(RoboAdviseError):
    pass


class Infeasible(SolverError):
    pass


class Unbounded(SolverError):
    pass


class MaxIterations(SolverError):
    pass


class PatternLimitExceeded(SolverError):
    pass


class ConstraintViolation(RoboAdviseError):
    pass


class NonPositiveRelative(RoboAdviseError):
    pass


class ShapeMismatch(RoboAdviseError):
    pass


class TrainingError(RoboAdviseError):
    pass


class BufferTooSmall(TrainingError):
    pass


class Divergence(TrainingError):
    pass
