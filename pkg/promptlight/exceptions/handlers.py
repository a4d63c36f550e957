"""
Global exception handlers for command-line entry points
"""

from typing import Callable, Dict, Type

from pydantic import ValidationError as PydanticValidationError

from ..utils.logging import get_logger
from .models import (EXIT_FAILURE, EXIT_USAGE, PromptLightError,
                     TrainingDivergedError)

logger = get_logger(__name__)


def promptlight_exception_handler(exc: PromptLightError) -> int:
    """Handle domain exceptions"""
    message = f"{exc.error_code}: {exc.detail}"
    if exc.context:
        context = ", ".join(
            f"{key}={value}" for key, value in exc.context.items() if value is not None
        )
        if context:
            message += f" ({context})"
    logger.error(message)
    return exc.exit_code


def diverged_exception_handler(exc: TrainingDivergedError) -> int:
    """Handle NaN aborts, pointing at the state dump"""
    logger.error(
        f"Training diverged at iteration {exc.context.get('iteration')}: {exc.detail}"
    )
    if exc.dump_path:
        logger.error(f"State dump written to {exc.dump_path}")
    return exc.exit_code


def validation_exception_handler(exc: PydanticValidationError) -> int:
    """Handle pydantic validation errors raised outside config loading"""
    for error in exc.errors():
        field = " -> ".join(str(loc) for loc in error["loc"])
        logger.error(f"Validation error: {field}: {error['msg']}")
    logger.warning(f"Validation Error: {exc.error_count()} field(s) failed validation")
    return EXIT_USAGE


def general_exception_handler(exc: Exception) -> int:
    """Handle general exceptions"""
    logger.opt(exception=exc).error(
        f"Unhandled Exception: {type(exc).__name__} - {str(exc)}"
    )
    return EXIT_FAILURE


# Most specific first
EXCEPTION_HANDLERS: Dict[Type[BaseException], Callable[..., int]] = {
    TrainingDivergedError: diverged_exception_handler,
    PromptLightError: promptlight_exception_handler,
    PydanticValidationError: validation_exception_handler,
    Exception: general_exception_handler,
}


def handle_exception(exc: Exception) -> int:
    """Dispatch an exception to its handler and return the process exit code"""
    for exc_type, handler in EXCEPTION_HANDLERS.items():
        if isinstance(exc, exc_type):
            return handler(exc)
    return general_exception_handler(exc)
