"""Exception types raised by the solvers and oracles."""


class BVLabError(Exception):
    """Base class for all package errors."""


class DomainError(BVLabError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class BranchError(BVLabError, ValueError):
    """The oracle branch requested does not apply to the boundary datum."""


class BracketError(BVLabError, RuntimeError):
    """Bracket expansion for the flux constant did not find a sign change."""


class NewtonDivergence(BVLabError, RuntimeError):
    """Newton iteration hit its iteration cap.

    The last iterate is attached as ``last`` so callers can inspect it.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class SolverFailure(BVLabError, RuntimeError):
    """A solve inside a viscosity sequence failed; carries the offending k."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k
