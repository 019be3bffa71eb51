"""Exception types raised across the package."""


class ClothFoldError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ClothFoldError, ValueError):
    pass


class InvalidState(ClothFoldError, RuntimeError):
    pass


class NoGraspableParticle(ClothFoldError, ValueError):
    pass


class NumericalDivergence(ClothFoldError, FloatingPointError):
    """Raised when the simulator produces non-finite positions.

    ``substep`` is the index of the integration substep (counted from the start
    of the action) at which the first non-finite value appeared.
    """

    def __init__(self, substep, message=None):
        self.substep = substep
        super().__init__(message or f"non-finite particle state at substep {substep}")


class InsufficientHistory(ClothFoldError, ValueError):
    pass


class DegenerateHull(ClothFoldError, ValueError):
    pass


class PlanningFailure(ClothFoldError, RuntimeError):
    pass


class InfeasibleConfig(ClothFoldError, ValueError):
    pass
