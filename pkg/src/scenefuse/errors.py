"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SceneFuseError(Exception):
    """Base class for every error raised by this package."""


class InvalidDetectionError(SceneFuseError):
    """A 2D detection violates its contract (non-positive extent, bad score)."""


class InvalidDepthError(SceneFuseError):
    """A depth value is non-positive, non-finite, or below the minimum."""


class SingularJacobianError(SceneFuseError):
    """The projection Jacobian is rank deficient beyond the condition guard."""


class DegenerateCovarianceError(SceneFuseError):
    """A covariance (or pairwise average) is singular below the determinant guard."""


class MergeContractError(SceneFuseError):
    """Two nodes were merged in violation of the merge preconditions."""


class InvalidEdgeError(SceneFuseError):
    """A relation edge violates its contract (empty votes, self loop)."""


class StreamFormatError(SceneFuseError):
    """A file does not conform to its documented binary/JSON format."""


class FrameParseError(StreamFormatError):
    """One frame line is malformed; the rest of the stream is still usable.

    Attributes:
        line_no: 1-based line number of the offending line.
    """

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class StreamOrderError(StreamFormatError):
    """frame_id values are not strictly increasing across the stream."""


class MissingDepthError(SceneFuseError):
    """No valid depth is available for a detection centroid."""


class ConfigError(SceneFuseError):
    """A configuration document is malformed or out of range."""


class EvaluationError(SceneFuseError):
    """Prediction and ground truth cannot be compared (vocabulary mismatch)."""


class GenerationError(SceneFuseError):
    """Synthetic scene generation could not satisfy its constraints."""
