"""Exception types shared across the package."""


class FptError(Exception):
    """Base class for all package-specific errors."""


class InvalidTimeOrderError(FptError, ValueError):
    """Kernel evaluation requested with t <= s."""


class IntegrationDivergedError(FptError, RuntimeError):
    """Flow integration produced a non-finite state."""


class GridDegenerateError(FptError, RuntimeError):
    """Boundary discretization produced a degenerate tangent."""


class DomainError(FptError, ValueError):
    """Evaluation point lies outside the moving domain."""


class PreconditionError(FptError, ValueError):
    """An operation precondition was violated."""


class SolverDivergedError(FptError, RuntimeError):
    """Time marching produced NaN values."""


class WindowTooLongError(FptError, RuntimeError):
    """Picard iteration failed to contract; reduce the window length."""


class RepresentationMismatchError(FptError, RuntimeError):
    """The two interior-field representations disagree beyond tolerance."""


class TooFewHitsError(FptError, ValueError):
    """Not enough Monte Carlo hits for a statistical comparison."""


class MoreTermsNeededError(FptError, ValueError):
    """Series evaluation would need more terms than tabulated."""
