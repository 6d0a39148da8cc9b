"""Exception hierarchy shared by every app.

Each error carries the process exit code the management commands report
for it: 2 for usage and configuration problems, 3 for runtime failures.
"""

import logging

from django.core.management.base import CommandError

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class SuperResolutionError(Exception):
    """Base class for all domain errors."""

    exit_code = EXIT_RUNTIME
    default_message = "An error occurred"

    def __init__(self, message=None, **details):
        self.message = message or self.default_message
        self.details = details
        super().__init__(self.message)


class ConfigError(SuperResolutionError):
    exit_code = EXIT_USAGE
    default_message = "Invalid configuration"


class UnsupportedScaleError(ConfigError):
    default_message = "Unsupported scale factor"


class DatasetError(SuperResolutionError):
    exit_code = EXIT_USAGE
    default_message = "Dataset not found"


class DimensionError(SuperResolutionError, ValueError):
    default_message = "Image dimensions are not compatible with the operation"


class ShapeError(SuperResolutionError, ValueError):
    default_message = "Tensor shapes do not match"


class SamplingError(SuperResolutionError):
    default_message = "Cannot sample patches of the requested size"


class LossError(SuperResolutionError):
    default_message = "Cannot evaluate loss"


class CheckpointError(SuperResolutionError):
    default_message = "Checkpoint error"


class CorruptCheckpointError(CheckpointError):
    default_message = "Checkpoint file is corrupt"


class CheckpointVersionError(CheckpointError):
    default_message = "Checkpoint version is not supported"


class DivergenceError(SuperResolutionError):
    """A loss became NaN or infinite; training stops instead of skipping."""

    default_message = "Training diverged"


class EvaluationError(SuperResolutionError):
    default_message = "Evaluation failed"


def command_error(exc):
    """
    Convert any exception raised under a management command into a
    CommandError carrying a stable exit code.
    """
    if isinstance(exc, CommandError):
        return exc

    if isinstance(exc, SuperResolutionError):
        logger.error(f"{type(exc).__name__}: {exc.message}", exc_info=True)
        message = exc.message
        if exc.details:
            message = f"{message}: {exc.details}"
        return CommandError(message, returncode=exc.exit_code)

    logger.error(f"Unexpected failure: {exc}", exc_info=True)
    return CommandError(f"Internal error: {exc}", returncode=EXIT_RUNTIME)
