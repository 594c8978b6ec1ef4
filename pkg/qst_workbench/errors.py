from __future__ import annotations


class QstError(RuntimeError):
    """Base class for every error the workbench raises on purpose."""


class InvalidParameter(QstError, ValueError):
    pass


class UnsupportedQubitCount(InvalidParameter):
    pass


class DimensionMismatch(QstError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NotPositiveDefinite(QstError, ValueError):
    pass


class NotHermitian(QstError, ValueError):
    pass


class DegenerateAlpha(QstError, ValueError):
    pass


class NonUnitaryBlock(QstError, ValueError):
    pass


class OutOfRange(QstError, IndexError):
    pass


class DegenerateDesign(QstError):
    pass


class ZeroProbability(QstError):
    pass


class NonFiniteLoss(QstError, ArithmeticError):
    pass


class FormatVersionMismatch(QstError):
    pass


class MissingModel(QstError, FileNotFoundError):
    pass


class ConfigError(QstError, ValueError):
    pass


class SentinelViolation(QstError, AssertionError):
    pass


class LikelihoodDecrease(QstError, AssertionError):
    pass
