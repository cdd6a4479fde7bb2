"""Exception hierarchy shared across the package.

Validation failures (bad model specs, bad config, malformed files) are kept
distinct from runtime failures so the CLI can map them to different exit
codes (2 vs 1).
"""


class FrameFilterError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FrameFilterError):
    """Invalid spec, config, input shape, or file contents."""


class InvalidSpecError(ValidationError):
    """A layer or classifier spec is internally inconsistent."""


class InvalidCropError(ValidationError):
    """Crop rectangle is empty or out of bounds."""


class InvalidInputError(ValidationError):
    """Input tensor does not match what the model expects."""


class SequencingError(FrameFilterError):
    """Stream items were pushed out of order."""


class InvariantViolationError(FrameFilterError):
    """Data breaks a structural invariant (e.g. overlapping event segments)."""


class NotFoundError(FrameFilterError):
    """Requested event or archive entry does not exist."""


class DegenerateDataError(ValidationError):
    """Training data is unusable (e.g. only one class present)."""


class UndefinedMetricError(FrameFilterError):
    """The metric has no defined value for these inputs."""


class GenerationError(FrameFilterError):
    """Synthetic stream constraints cannot be satisfied."""
