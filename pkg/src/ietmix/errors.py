"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class IetMixError(Exception):
    """Base class for every error raised by the package."""


class InvalidIetError(IetMixError, ValueError):
    """Malformed permutation or length data."""


class OutOfDomainError(IetMixError, ValueError):
    """A point outside [0, 1) (or outside an induced interval)."""


class ExceptionalPointError(IetMixError, ValueError):
    """An observable was queried at a point of its exceptional set.

    ``index`` is the orbit index at which the hit happened, when known.
    """

    def __init__(self, message: str, point=None, index: int | None = None):
        super().__init__(message)
        self.point = point
        self.index = index


class SingularityHitError(ExceptionalPointError):
    """An orbit came within the guard radius of a roof singularity."""


class RauzyConnectionError(IetMixError):
    """Rauzy-Veech induction hit a tie between the two competing lengths.

    Attributes
    ----------
    step : int
        Index of the step that could not be performed.
    trajectory : object or None
        The partial trajectory built before the tie, if any.
    """

    def __init__(self, message: str, step: int, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class PreconditionError(IetMixError, ValueError):
    """An operation's documented precondition does not hold for the input."""


class ConstructionError(IetMixError):
    """A partition or profile construction degenerated."""


class ResourceCapError(IetMixError):
    """A configured resource cap (samples, discards, time) was exceeded."""
