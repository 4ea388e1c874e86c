"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SchwingerSimError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SchwingerSimError, ValueError):
    """Invalid input value (non-finite, negative where positive required, ...)."""


class DimensionError(ValidationError):
    """Array length or matrix shape does not match the lattice."""


class MomentumRangeError(ValidationError):
    """Momentum outside the halved Brillouin zone; callers must fold first."""


class DomainError(ValidationError):
    """Arguments outside the mathematical domain of a formula."""


class NumericalError(SchwingerSimError, ArithmeticError):
    """A numerical routine failed (eigensolver, NaN, overflow)."""


class AmbiguousVacuumError(SchwingerSimError):
    """The reference spectrum has eigenvalues inside the zero-mode band."""


class StepSizeError(ValidationError):
    """Time step too large for the Hamiltonian norm."""


class SizeCapError(ValidationError):
    """Exact many-body construction requested beyond the size cap."""


class AbortedRunError(NumericalError):
    """Evolution stopped because the state became non-finite.

    The partially recorded trajectory is kept on ``trajectory`` so callers
    can still write it out.
    """

    def __init__(self, message: str, trajectory=None, time: float | None = None):
        super().__init__(message)
        self.trajectory = list(trajectory or [])
        self.time = time


class StepSizeWarning(UserWarning):
    """dt times the Hamiltonian norm is above the comfortable range."""
