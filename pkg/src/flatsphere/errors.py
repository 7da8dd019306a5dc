"""Exception types shared across the package."""


class FlatsphereError(Exception):
    pass


class DomainError(FlatsphereError, ValueError):
    """Argument outside the region where a formula is defined."""


class BoundsError(FlatsphereError, IndexError):
    pass


class NumericFault(FlatsphereError, ArithmeticError):
    """Non-finite values appeared in a computation."""


class InconsistencyError(FlatsphereError):
    """Quadrature gave a negative Parseval remainder beyond tolerance."""


class InitializationError(FlatsphereError, ValueError):
    pass


class FrameError(FlatsphereError, ValueError):
    pass


class BlowUpProximity(FlatsphereError):
    """Step size fell below the floor; carries the trajectory so far."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NotBlowingUp(FlatsphereError):
    pass


class InsufficientResolution(FlatsphereError):
    pass


class InsufficientData(FlatsphereError):
    pass


class NotInBasin(FlatsphereError):
    pass


class InvalidBracket(FlatsphereError, ValueError):
    pass


class NoExit(FlatsphereError):
    pass


class SeriesDivergence(FlatsphereError):
    pass


class UsageError(FlatsphereError, ValueError):
    pass
