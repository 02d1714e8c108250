"""Exception and warning types raised by the toolkit."""


class GmamError(Exception):
    """Base class for all toolkit errors."""


class PositiveDefinitenessViolation(GmamError):
    """A noise covariance matrix was singular or indefinite where it must be SPD."""


class DegenerateEndpoints(GmamError):
    """Curve endpoints coincide; no transition curve can be built."""


class ZeroTangent(GmamError):
    """A curve tangent vanished where a direction was required."""


class StepFailure(GmamError):
    """A curve-evolution step could not be completed."""


class SingularJacobian(GmamError):
    """Newton iteration hit a singular drift Jacobian."""


class NoConvergence(GmamError):
    """An iterative solve exhausted its iteration budget without converging."""


class SaddleNotFound(GmamError):
    """Saddle search ended on an attractor, an endpoint, or nothing at all."""


class ContinuationStalled(GmamError):
    """Parameter continuation underflowed its step size away from any fold."""


class NotAFold(GmamError):
    """Continuation failure point did not satisfy the fold certification test."""


class NonPositiveCurrent(GmamError):
    """A tunneling current was non-positive where the noise model needs J > 0."""


class FitDomainError(GmamError):
    """Power-law fit received non-positive values inside the fit window."""


class ConfigError(GmamError):
    """Run configuration is malformed (unknown key, bad value, missing field)."""


class SameBasinWarning(UserWarning):
    """String endpoints appear to relax to the same attractor."""
