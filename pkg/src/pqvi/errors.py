"""Exception hierarchy shared by all solvers."""


class PqviError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(PqviError, ValueError):
    pass


class ShapeError(PqviError, ValueError):
    pass


class InvalidDataError(PqviError, ValueError):
    pass


class DomainError(PqviError, ValueError):
    pass


class SizeError(PqviError, ValueError):
    pass


class ConfigError(PqviError, ValueError):
    pass


class NonConvergenceError(PqviError, RuntimeError):
    """An iterative method hit its iteration cap.

    ``residual`` holds the last measured stopping quantity, ``step`` the time
    step (if any) and ``s`` the perturbation size (if any) at which it failed.
    """

    def __init__(self, message, residual=float("nan"), step=None, s=None):
        super().__init__(message)
        self.residual = residual
        self.step = step
        self.s = s


class InternalInconsistencyError(PqviError, RuntimeError):
    pass


class AssumptionViolation(PqviError, RuntimeError):
    """A structural hypothesis (ordering, sub/supersolution) failed numerically."""

    def __init__(self, message, node=None, iteration=None, magnitude=float("nan")):
        super().__init__(message)
        self.node = node
        self.iteration = iteration
        self.magnitude = magnitude


class StaleSolutionError(PqviError, RuntimeError):
    pass
