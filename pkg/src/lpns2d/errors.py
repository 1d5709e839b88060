"""Exception hierarchy shared by the solver modules and the CLI."""

from __future__ import annotations


class LpnsError(Exception):
    """Base class for every error raised by lpns2d."""

    exit_code = 1


class ValidationError(LpnsError, ValueError):
    """Bad input or configuration, caught before any compute starts."""

    exit_code = 2


class DimensionError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class DomainError(ValidationError):
    """An argument lies outside the mathematical domain of the operation."""


class AlignmentError(ValidationError):
    pass


class GeometryError(ValidationError):
    pass


class NumericalError(LpnsError, ArithmeticError):
    """A solver failed mid-run (contraction, CFL, vacuum)."""

    exit_code = 3


class ContractionError(NumericalError):
    def __init__(self, message: str, a_sup: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.a_sup = a_sup
        self.iterations = iterations


class StabilityError(NumericalError):
    def __init__(self, message: str, advisory_dt: float | None = None):
        super().__init__(message)
        self.advisory_dt = advisory_dt


class StateError(NumericalError):
    """The density fluctuation reached the vacuum bound 1 + a <= delta."""
