"""Exception hierarchy.

Three families matter to callers (and map onto distinct CLI exit codes):
invalid input, exhausted working precision, and genuine numerical failure
of a search (no minimum, bad cap, ...).
"""


class OppqError(Exception):
    """Base class for all package errors."""


class InvalidParameter(OppqError, ValueError):
    """A problem, weight or run parameter is outside its admissible range."""


class PrecisionError(OppqError):
    """The working precision is insufficient; rerun with more digits."""


class PrecisionExhausted(PrecisionError):
    """A self-check (recurrence residual, reproducibility) failed."""


class CancellationDetected(PrecisionError):
    """An alternating sum lost more digits than the guard allows."""


class NotPositiveDefinite(PrecisionError):
    """A matrix that must be positive definite has a non-positive pivot."""


class CholeskyNotPD(NotPositiveDefinite):
    """Gram matrix Cholesky failed; never regularized, raise precision instead."""


class SubmatrixNotPD(NotPositiveDefinite):
    """The free-variable block of a constrained quadratic form is not definite."""


class NumericalError(OppqError):
    """A numerical procedure could not complete on the given input."""


class SingularStep(NumericalError, ZeroDivisionError):
    """A recurrence step divides by a vanishing coefficient."""


class LinearSolveSingular(SingularStep):
    """A per-antidiagonal linear system is singular at working precision."""


class CoverageError(OppqError, LookupError):
    """A coefficient table does not cover a required moment index."""


class NoMinimumFound(NumericalError):
    """The functional has no interior local minimum on the window."""


class CapBelowMinimum(NumericalError):
    """The cap does not exceed the functional value at the minimum."""


class NeighborCollision(NumericalError):
    """Bracket expansion reached a neighbouring lobe before crossing the cap."""
