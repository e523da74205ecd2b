"""Exception types shared across the package."""


class LevyEmbedError(Exception):
    """Base class for all package errors."""


class QuadratureError(LevyEmbedError):
    """Numerical integration did not reach the requested tolerance.

    Carries the achieved error estimate and, when known, the sub-interval
    on which the integrator gave up.
    """

    def __init__(self, message, achieved=None, interval=None):
        super().__init__(message)
        self.achieved = achieved
        self.interval = interval


class FeasibilityBreached(LevyEmbedError):
    """The ratio (h1^ - h0^)/eta has a non-removable singularity."""

    def __init__(self, message, u0=None):
        super().__init__(message)
        self.u0 = u0


class TailMassError(LevyEmbedError):
    """The Fourier integrand keeps carrying mass no matter how far out we go."""

    def __init__(self, message, tail=None):
        super().__init__(message)
        self.tail = tail


class UnsupportedKind(LevyEmbedError):
    """A jump measure or density kind not handled by the requested operation."""


class ConfigError(LevyEmbedError):
    """Malformed run configuration."""


class DegenerateField(LevyEmbedError):
    """Operation needs a strictly positive total potential."""


class RejectedPair(LevyEmbedError):
    """The pair failed the feasibility check; no embedding is run."""

    def __init__(self, message, feasibility=None):
        super().__init__(message)
        self.feasibility = feasibility
