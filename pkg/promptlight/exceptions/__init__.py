"""
Custom exceptions
"""

from .handlers import handle_exception
from .models import (EXIT_DIVERGED, EXIT_FAILURE, EXIT_OK, EXIT_USAGE,
                     BackboneError, CheckpointIntegrityError,
                     CheckpointMismatchError, ConfigurationError, DataError,
                     NothingToDoError, PromptLightError, ShapeError,
                     StateError, TrainingDivergedError, ValidationError)

__all__ = [
    "handle_exception",
    "EXIT_OK",
    "EXIT_FAILURE",
    "EXIT_USAGE",
    "EXIT_DIVERGED",
    "PromptLightError",
    "ValidationError",
    "ShapeError",
    "ConfigurationError",
    "DataError",
    "StateError",
    "BackboneError",
    "CheckpointIntegrityError",
    "CheckpointMismatchError",
    "TrainingDivergedError",
    "NothingToDoError",
]
