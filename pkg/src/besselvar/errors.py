"""Exception types raised across the package."""


class BesselVarError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BesselVarError, ValueError):
    pass


class CoverageError(BesselVarError):
    """A grid function does not cover the requested region."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class NumericRangeError(BesselVarError, OverflowError):
    pass


class EvaluationError(BesselVarError):
    """An integrand returned a non-finite value at a quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class AccuracyError(BesselVarError):
    """A quadrature error estimate exceeded its tolerance."""

    def __init__(self, message, estimate=None, where=None):
        super().__init__(message)
        self.estimate = estimate
        self.where = where


class TruncationError(BesselVarError):
    pass


class ResolutionError(BesselVarError):
    pass


class InvalidAtomError(BesselVarError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UndefinedRatioError(BesselVarError, ZeroDivisionError):
    pass


class ConfigError(BesselVarError):
    """A run configuration is malformed; carries the field and line when known."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
