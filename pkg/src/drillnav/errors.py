"""Exception hierarchy.

Everything a caller can fix by supplying different input derives from
``ValidationError``; the CLI maps that family to exit code 2.
"""


class ValidationError(ValueError):
    pass


class TooFewSamples(ValidationError):
    pass


class InsufficientMotion(ValidationError):
    """Hand-eye capture poses do not rotate about two independent axes."""


class DegenerateGeometry(ValidationError):
    """Point-offset calibration system is rank deficient."""


class CollinearPoints(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class IllegalTransition(ValidationError):
    """Workflow event not permitted in the current phase."""


class MissingCalibration(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class SessionFormatError(ValidationError):
    """Malformed capture session or artifact file."""
