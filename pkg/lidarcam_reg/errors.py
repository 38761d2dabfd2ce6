"""
Exception hierarchy for lidarcam_reg
Every error carries the CLI exit code it maps to
"""

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_REGISTRATION_FAILURE = 3
EXIT_IO_ERROR = 4


class RegistrationError(Exception):
    """Base class for all toolkit errors"""

    exit_code = EXIT_REGISTRATION_FAILURE


# Configuration / input validation

class InvalidConfig(RegistrationError):
    exit_code = EXIT_INVALID_CONFIG


class WeightShapeMismatch(RegistrationError):
    exit_code = EXIT_INVALID_CONFIG


class WeightFileError(RegistrationError):
    """Bad magic, unsupported version or CRC mismatch in a weight file"""

    exit_code = EXIT_INVALID_CONFIG


class FormatError(RegistrationError):
    """Malformed PFM / pose / intrinsics / match file"""

    exit_code = EXIT_IO_ERROR


# Geometry and matching

class EmptyProjection(RegistrationError):
    """No point landed inside the image (fields of view are disjoint)"""


class NonPositiveDepth(RegistrationError):
    pass


class DimensionMismatch(RegistrationError):
    pass


class WindowOutOfRange(RegistrationError):
    pass


# Supervision

class EmptyGroundTruth(RegistrationError):
    pass


class EmptyMatchSet(RegistrationError):
    pass


# Pose

class DegenerateConfiguration(RegistrationError):
    pass


class InsufficientCorrespondences(RegistrationError):
    pass


class NoConsensus(RegistrationError):
    pass


# Evaluation

class EmptyResults(RegistrationError):
    pass


# Failure reasons a benchmark sample may end with
FAILURE_REASONS = ("InsufficientCorrespondences", "NoConsensus")


def exit_code_for(error: BaseException) -> int:
    """Map any exception to the stable CLI exit code"""
    if isinstance(error, RegistrationError):
        return error.exit_code
    if isinstance(error, OSError):
        return EXIT_IO_ERROR
    return EXIT_REGISTRATION_FAILURE
