"""Exception types raised across the package."""


class LidarSSLError(Exception):
    """Base class for all package errors."""


class ValidationError(LidarSSLError, ValueError):
    """Input violates a documented precondition."""


class InvalidTransform(ValidationError):
    pass


class DegenerateBox(ValidationError):
    pass


class InvalidScene(ValidationError):
    pass


class PointOutOfRange(ValidationError):
    pass


class BoxOutOfRange(ValidationError):
    pass


class UnsupportedGrid(ValidationError):
    pass


class RangeOverflow(ValidationError):
    pass


class RangeMismatch(ValidationError):
    pass


class ProvenanceMismatch(ValidationError):
    pass


class DirectionForbidden(ValidationError):
    pass


class MissingScore(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class NotDefined(LidarSSLError):
    """A metric has no meaningful value for the given input (e.g. no ground truth)."""


class PlacementFailed(LidarSSLError):
    """Synthetic object placement could not be satisfied within the attempt budget."""


class ConfigError(ValidationError):
    """Configuration failed validation; ``problems`` lists every failure found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
