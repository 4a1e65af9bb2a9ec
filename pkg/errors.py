"""
ERRORS
======
Exception hierarchy shared by every module.

Each family maps onto one CLI exit status:
validation problems exit 2, accuracy problems exit 3,
violated inequalities or identities exit 4.
"""

from typing import Optional


class QIBoundError(Exception):
    """Base class for all library errors."""

    exit_status = 1


# Validation -------------------------------------------------------------

class ValidationError(QIBoundError, ValueError):
    exit_status = 2


class ConfigError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ProbeDomainError(DomainError):
    """Tabulated probe evaluated outside its table."""


class UnsupportedOperationError(ValidationError):
    pass


class GridCoverageError(ValidationError):
    def __init__(self, message: str, missing_band: tuple):
        super().__init__(message)
        self.missing_band = missing_band


class TruncationCapacityError(ValidationError):
    def __init__(self, message: str, top_population: float):
        super().__init__(message)
        self.top_population = top_population


# Accuracy ---------------------------------------------------------------

class AccuracyError(QIBoundError, ArithmeticError):
    exit_status = 3


class IntegrationError(AccuracyError):
    pass


class QuadratureError(AccuracyError):
    def __init__(self, message: str, partial: Optional[float] = None, error: Optional[float] = None):
        super().__init__(message)
        self.partial = partial
        self.error = error


class TransformAccuracyError(AccuracyError):
    pass


class AliasingError(TransformAccuracyError):
    pass


class TruncationError(TransformAccuracyError):
    """Sampled function does not decay inside its sample span."""


# Violations -------------------------------------------------------------

class ViolationError(QIBoundError, AssertionError):
    exit_status = 4


class InequalityViolationError(ViolationError):
    pass


class IdentityViolationError(ViolationError):
    pass
