"""Exception types shared across the package."""


class TessweepError(Exception):
    """Base class for all package-specific failures."""


class DomainError(TessweepError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateLawError(TessweepError, ValueError):
    """A direction law carries no mass and cannot drive any process."""


class NumericalError(TessweepError, RuntimeError):
    """A numerical routine failed to converge; carries a residual estimate."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegeneracyError(TessweepError, RuntimeError):
    """Geometric input violates a general-position assumption."""


class ContractError(TessweepError, ValueError):
    """Caller passed data violating a documented structural contract."""


class ResolutionError(TessweepError, ValueError):
    """A grid is too coarse for the requested discrete operator."""


class StabilityError(TessweepError, RuntimeError):
    """A time step violates the stability bound of an explicit scheme."""


class RunawayError(TessweepError, RuntimeError):
    """A stochastic trajectory exceeded its event budget without terminating."""


class SampleSizeError(TessweepError, ValueError):
    """Too few samples to evaluate a statistical estimate reliably."""


class TurningPointError(TessweepError, RuntimeError):
    """The transform coefficient crosses zero on the evaluation grid."""


class TransformDivergenceError(TessweepError, ValueError):
    """The requested transform integral does not converge for this law."""
