"""Exception types shared across the package."""


class RadwaveError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RadwaveError, ValueError):
    """Invalid or inconsistent run configuration."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SupportViolationError(ConfigurationError):
    """Initial data support does not fit inside the admissible interval."""


class DomainError(RadwaveError, ValueError):
    """A point or parameter lies outside the domain of an operation."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class OrientationError(DomainError):
    """Null coordinates given in the wrong order (v > u)."""


class CoverageError(RadwaveError):
    """A transformed grid needs values the source field does not hold."""

    def __init__(self, message, corner=None):
        super().__init__(message)
        self.corner = corner


class BlowUpError(RadwaveError, FloatingPointError):
    """Non-finite or runaway values appeared during time stepping."""

    def __init__(self, message, t=None, r=None):
        super().__init__(message)
        self.t = t
        self.r = r


class DegenerateInputError(RadwaveError, ValueError):
    """Input too small or too uniform for the requested computation."""


class OscillationError(RadwaveError, ValueError):
    """A decay fit window contains sign changes that cannot be handled."""


class NoiseFloorError(RadwaveError, ValueError):
    """Signal in a fit window drops to round-off level."""
