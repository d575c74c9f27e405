"""Exception types shared across the package."""


class ArrivalLabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ArrivalLabError):
    """Invalid or inconsistent configuration input."""


class NonPositiveCurvature(ArrivalLabError):
    """A speed was evaluated at curvature data outside the positive cone."""


class NonPositiveSpeed(ArrivalLabError):
    """A speed function returned a non-positive value."""


class InvalidSegment(ArrivalLabError):
    """A cone segment leaves the positive definite cone."""


class ConvexityLost(ArrivalLabError):
    """Curvature dropped to the degeneracy floor during a flow step."""


class StabilityViolation(ArrivalLabError):
    """Time stepping could not proceed within the step-size floor."""


class NonMonotoneContainment(ArrivalLabError):
    """Stored curves are not nested, so arrival times are ill defined."""


class DegenerateGradient(ArrivalLabError):
    """A gradient magnitude fell below the level-set floor."""


class MaskedPoint(ArrivalLabError):
    """A pointwise query landed on a cell excluded from verification."""
