"""Exception hierarchy shared by every stage of the pipeline."""


class GPPDError(Exception):
    """Base class for all toolkit errors."""


class GridError(GPPDError, ValueError):
    """Invalid grid, field shape, or snapshot layout."""


class ConvergenceError(GPPDError):
    """An iterative method stopped before meeting its tolerance.

    ``best`` carries the best residual (or energy gap) reached.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class RegimeError(GPPDError):
    """The requested parameters lie outside the regime where the construction works.

    Raised for bracket sign failures, near-singular linearized operators and
    divergence of the fixed-point map. The CLI maps it to exit status 2.
    """

    def __init__(self, message, reason=None):
        super().__init__(message)
        self.reason = reason or message


class OrthogonalityError(RegimeError):
    """A right-hand side is not orthogonal to the kernel direction."""

    def __init__(self, message, inner=None):
        super().__init__(message, reason="solvability condition violated")
        self.inner = inner


class IntegrationError(GPPDError):
    """The time integrator produced a non-finite field."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
