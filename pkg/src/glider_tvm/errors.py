"""Exception and warning types raised across the package."""


class GliderError(Exception):
    """Base class for all package errors."""


class ProfileError(GliderError, ValueError):
    pass


class NonPositiveDrag(ProfileError):
    pass


class NonMonotoneAlpha(ProfileError):
    pass


class InsufficientRows(ProfileError):
    pass


class OutOfMeasuredRange(ProfileError):
    pass


class NonPositiveParam(GliderError, ValueError):
    pass


class SingularAtZeroSpeed(GliderError, ValueError):
    pass


class StepSizeUnderflow(GliderError, RuntimeError):
    pass


class EscapeDuringWindow(GliderError, RuntimeError):
    pass


class DomainError(GliderError, ValueError):
    pass


class CorrectorDivergence(GliderError, RuntimeError):
    pass


class EmptyBranch(GliderError, ValueError):
    pass


class InvalidBracket(GliderError, ValueError):
    pass


class IndeterminateEndpoint(GliderError, ValueError):
    pass


class SeedNotFound(GliderError, RuntimeError):
    pass


class NotASaddle(GliderError, ValueError):
    pass


class DegenerateTangent(GliderError, ValueError):
    pass


class EmptyField(GliderError, ValueError):
    pass


class NotPeriodicSchedule(GliderError, ValueError):
    pass


class ThetaOutOfSurfaceRange(GliderError, ValueError):
    pass


class ConfigError(GliderError, ValueError):
    """Invalid run configuration; ``field`` names the offending option."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class TangencyDetected(UserWarning):
    """A root of the equilibrium residual where its derivative also vanishes."""
