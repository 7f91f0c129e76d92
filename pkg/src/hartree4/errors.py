"""Exception types shared across the package.

Exit-code mapping used by the CLI: usage/validation errors -> 2,
convergence failures -> 3, domain/resource violations -> 4.
"""


class InvalidArgumentError(ValueError):
    """Precondition violation on an operation argument."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to converge.

    Carries the residual history so callers can diagnose or escalate.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class CollisionError(RuntimeError):
    """m-body integration approached a collision (a -> 0)."""

    def __init__(self, message, t_estimate=None):
        super().__init__(message)
        self.t_estimate = t_estimate


class DomainError(RuntimeError):
    """Field support does not fit the periodic box, or resource cap exceeded."""


class UnsupportedOrderError(InvalidArgumentError):
    """Requested expansion order exceeds the explicitly implemented tables."""


class NearSingularRHSError(RuntimeError):
    """Right-hand side violates a solvability (orthogonality) constraint."""

    def __init__(self, message, offending_inner=None):
        super().__init__(message)
        self.offending_inner = offending_inner


class FitFailureError(RuntimeError):
    """Log-log slope fit is degenerate (too few points or zero spread)."""


class BlowUpDetected(RuntimeError):
    """NaN/inf appeared during time stepping; carries the last finite state."""

    def __init__(self, message, last_state=None, t=None):
        super().__init__(message)
        self.last_state = last_state
        self.t = t
