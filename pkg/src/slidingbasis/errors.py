"""Exception types raised by the library."""


class SlidingBasisError(Exception):
    """Base class for all library errors."""


class InvalidDomainError(SlidingBasisError):
    """Domain parameters are inconsistent (non-positive sizes, bad indices)."""


class NonManifoldError(InvalidDomainError):
    """A mesh face is shared by more than two elements."""


class DegenerateElementError(InvalidDomainError):
    """An element has (numerically) zero measure."""


class SpectralFailureError(SlidingBasisError):
    """Eigensolver failed to converge.

    Carries the worst eigenpair residual seen, if available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InvalidFieldError(SlidingBasisError):
    """A material/speed field violates its domain constraints."""


class SingularExponentError(SlidingBasisError):
    """The thrust closure is singular (pressure exponent n = 1)."""


class SingularSystemError(SlidingBasisError):
    """Stiffness system is singular after boundary-condition elimination."""


class SolverError(SlidingBasisError):
    """A linear or nonlinear solver failed beyond recovery."""


class ConfigError(SlidingBasisError):
    """Run configuration is malformed or references missing files."""
