"""Exception types shared across the package."""


class TwistorLabError(Exception):
    """Base class for errors raised by twistorlab."""


class ConfigError(TwistorLabError, ValueError):
    """Unknown preset, malformed spec string or invalid scenario config."""


class NonTransversalExit(TwistorLabError):
    """The orbit meets the boundary tangentially (glancing)."""


class StepLimitExceeded(TwistorLabError):
    """The ODE solver gave up before reaching the boundary or the final time."""


class Trapped(TwistorLabError):
    """No boundary exit before the trapping guard time."""


class ConvexityViolated(TwistorLabError):
    """The boundary is not strictly convex for the flow at the requested point."""


class NotHardy(TwistorLabError):
    """A circle function has non-negligible negative Fourier modes."""


class NotCircleDiffeo(TwistorLabError):
    """Samples do not describe an orientation preserving diffeomorphism of the circle."""


class DegenerateRatio(TwistorLabError):
    """``|a| == |b|`` so ``(a mu + b conj(mu)) / |a mu + b conj(mu)|`` is undefined."""


class SpectralDecayError(TwistorLabError):
    """Truncated Fourier series does not resolve the sampled function."""
