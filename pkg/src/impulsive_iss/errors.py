"""Exception taxonomy shared across the package."""


class ImpulsiveIssError(Exception):
    """Base class for all package errors."""


class DomainError(ImpulsiveIssError):
    """Argument outside the mathematical domain (e.g. negative input to a class-K function)."""


class ArgumentError(ImpulsiveIssError):
    """Malformed argument: empty grid, missing metadata, bad step size, ..."""


class BracketError(ImpulsiveIssError):
    """Target value not enclosed by the supplied or auto-expanded bracket."""


class ClassViolationError(ImpulsiveIssError):
    """A function violated its claimed comparison-function class on sampled points."""


class RateSignError(ImpulsiveIssError):
    """Decay rate non-positive at an interior sample where positivity is required."""


class ImageError(ImpulsiveIssError):
    """Requested value lies outside the image of a monotone transform."""


class GridError(ImpulsiveIssError):
    """Invalid spatial grid specification."""


class RangeError(ImpulsiveIssError):
    """Time outside the simulated horizon."""


class SegmentBoundaryError(ImpulsiveIssError):
    """Finite-difference stencil would cross an impulse time."""


class OrientationError(ImpulsiveIssError):
    """Jump rate not oriented as required (e.g. alpha(a) >= a where stabilizing jumps are assumed)."""


class PreconditionError(ImpulsiveIssError):
    """A construction precondition (dwell-time inequality) failed."""


class SequenceError(ImpulsiveIssError):
    """Impulse-time sequence incompatible with the dwell bound theta."""


class ConstructionError(ImpulsiveIssError):
    """A constructed certificate failed its class check."""


class ConfigError(ImpulsiveIssError):
    """Scenario configuration invalid; message carries the offending path."""


class BlowUpError(ImpulsiveIssError):
    """State escaped the finiteness threshold during integration."""

    def __init__(self, message: str, last_finite_time: float):
        super().__init__(message)
        self.last_finite_time = last_finite_time
