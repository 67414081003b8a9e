"""Calibration, registration and J-shape drilling navigation with a synthetic bench."""

__version__ = "0.1.0"

from .errors import (CollinearPoints, DegenerateGeometry, EmptyInput, IllegalTransition,  # noqa: E402
                     InsufficientMotion, InvalidParameter, MissingCalibration, SessionFormatError, TooFewSamples,
                     ValidationError)
from .se3 import Pose, PoseError, Rot3, compose, invert, pose_error  # noqa: E402

__all__ = [
    "__version__", "Pose", "PoseError", "Rot3", "compose", "invert", "pose_error",
    "ValidationError", "TooFewSamples", "InsufficientMotion", "DegenerateGeometry", "CollinearPoints",
    "InvalidParameter", "IllegalTransition", "MissingCalibration", "EmptyInput", "SessionFormatError",
]
