"""Exception hierarchy.

Every error raised by the library derives from :class:`ExpansionError` so
callers (the CLI in particular) can map failures onto exit codes.
"""


class ExpansionError(Exception):
    """Base class for all library errors."""


class ValidationError(ExpansionError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(ExpansionError):
    """A numerical routine failed (e.g. eigensolver did not converge)."""


class DegeneracyError(NumericalError):
    """Two instantaneous levels came closer than the gap tolerance.

    Attributes
    ----------
    time : float
        Grid time at which the smallest gap was found.
    levels : tuple[int, int]
        Tracked level indices of the offending pair.
    gap : float
        The offending gap.
    level_index : int or None
        Expansion level (i of H^(i)) when raised from the expansion engine.
    """

    def __init__(self, message, time=None, levels=None, gap=None, level_index=None):
        super().__init__(message)
        self.time = time
        self.levels = levels
        self.gap = gap
        self.level_index = level_index


class TrackingError(NumericalError):
    """Level matching between neighbouring grid points was ambiguous."""


class ResolutionError(NumericalError):
    """The time grid is too coarse for the interpolated level Hamiltonian."""


class ConvergenceError(NumericalError):
    """Step halving did not reach the requested tolerance."""

    def __init__(self, message, achieved=None, substeps=None):
        super().__init__(message)
        self.achieved = achieved
        self.substeps = substeps


class GaugeSingularityError(ExpansionError):
    """The single-valued spin eigenbasis is undefined (theta at pi)."""


class ClosedFormMismatchError(NumericalError):
    """A closed-form level Hamiltonian disagrees with the generic construction.

    Both matrices are kept so the discrepancy can be inspected.
    """

    def __init__(self, message, closed_form=None, generic=None, distance=None, time=None):
        super().__init__(message)
        self.closed_form = closed_form
        self.generic = generic
        self.distance = distance
        self.time = time


class InfeasibleProfileError(ExpansionError):
    """A generated field radius is not strictly positive."""

    def __init__(self, message, interval=None, min_radius=None):
        super().__init__(message)
        self.interval = interval
        self.min_radius = min_radius


class RefinementError(NumericalError):
    """A branch of a closed-form angle cannot be followed by continuity."""
