"""Exception types raised across the package."""


class KornLabError(Exception):
    """Base class for all package errors."""


# geometry
class GeometryError(KornLabError):
    pass


class PositivityViolation(GeometryError):
    pass


class NonPeriodic(GeometryError):
    pass


class SelfIntersection(GeometryError):
    pass


class NonClosed(GeometryError):
    pass


class ApexIncluded(GeometryError):
    pass


class OutOfDomain(GeometryError):
    pass


class NoEmbedding(GeometryError):
    pass


class CurveParseError(GeometryError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# operators / ansatz
class DegenerateMetric(KornLabError):
    pass


class ZeroField(KornLabError):
    pass


class NotSeparable(KornLabError):
    pass


class ZeroCurvature(KornLabError):
    pass


class DegenerateCase2(KornLabError):
    pass


class SupportViolation(KornLabError):
    pass


# planar
class CoeffVanishes(KornLabError):
    pass


class ZeroDenominator(KornLabError):
    pass


class VariantViolation(KornLabError):
    pass


class NotHarmonic(KornLabError):
    pass


# solver
class NonConvergence(KornLabError):
    pass


class ResolutionTooLow(KornLabError):
    pass


class NotPD(KornLabError):
    pass


# lab
class ConfigError(KornLabError):
    pass


class InsufficientData(KornLabError):
    pass


class NonPositiveValue(KornLabError):
    pass


class IoFailure(KornLabError):
    pass


class UnresolvedOscillation(UserWarning):
    """Quadrature has fewer than 8 nodes per period of the declared wavenumber."""
