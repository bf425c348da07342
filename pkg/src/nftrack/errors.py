"""Exception types shared across the tracking engine."""


class TrackError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(TrackError, ValueError):
    """Input violates a documented precondition (shape, length, range)."""


class DegenerateGeometryError(TrackError):
    """Point configuration cannot constrain the model (collinear / rank-deficient)."""


class EstimationFailedError(TrackError):
    """RANSAC could not find a model with enough inliers."""


class PoseFailedError(TrackError):
    """PnP could not produce a physically valid pose."""


class SingularProjectionError(TrackError):
    """A point mapped onto the line at infinity (|w| ~ 0)."""


class BehindCameraError(TrackError):
    """An object point has non-positive depth under the given pose."""


class TooFewFeaturesError(TrackError):
    """Feature extraction produced fewer keypoints than the configured minimum."""


class TooFewPointsError(TrackError):
    """Not enough inlier points to seed or continue patch tracking."""


class TrackingLostError(TrackError):
    """The tracking phase could not re-establish the target this frame."""


class ConfigError(TrackError):
    """Configuration text could not be parsed or holds an invalid value."""
