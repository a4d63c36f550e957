"""
Custom exception models
"""

from typing import Optional

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


class PromptLightError(Exception):
    """Base error with a machine-readable code and context"""

    exit_code: int = EXIT_FAILURE

    def __init__(
        self,
        detail: str,
        error_code: str = None,
        context: dict = None,
        exit_code: Optional[int] = None,
    ):
        super().__init__(detail)
        self.detail = detail
        self.error_code = error_code or "PROMPTLIGHT_ERROR"
        self.context = context or {}
        if exit_code is not None:
            self.exit_code = exit_code


class ValidationError(PromptLightError):
    """Invalid input values (NaNs, out-of-range numbers, empty batches)"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str, field: str = None, error_code: str = None):
        super().__init__(
            detail=detail,
            error_code=error_code or "VALIDATION_ERROR",
            context={"field": field} if field else None,
        )


class ShapeError(ValidationError):
    """Tensor shapes do not match the operation's contract"""

    def __init__(self, detail: str, expected=None, actual=None):
        super().__init__(detail=detail, error_code="SHAPE_ERROR")
        if expected is not None:
            self.context["expected"] = str(expected)
        if actual is not None:
            self.context["actual"] = str(actual)


class ConfigurationError(PromptLightError):
    """Run configuration is invalid or points at unusable paths"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str, field: str = None, line: int = None):
        context = {}
        if field:
            context["field"] = field
        if line:
            context["line"] = line
        super().__init__(
            detail=detail, error_code="CONFIGURATION_ERROR", context=context
        )


class DataError(PromptLightError):
    """Image data could not be used"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str, path: str = None):
        super().__init__(
            detail=detail,
            error_code="DATA_ERROR",
            context={"path": path} if path else None,
        )


class StateError(PromptLightError):
    """Operation called in a training state that does not allow it"""

    def __init__(self, detail: str, stage: str = None):
        super().__init__(
            detail=detail,
            error_code="STATE_ERROR",
            context={"stage": stage} if stage else None,
        )


class BackboneError(PromptLightError):
    """The vision-language backbone cannot serve the request"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str, backbone: str = None):
        super().__init__(
            detail=detail,
            error_code="BACKBONE_ERROR",
            context={"backbone": backbone} if backbone else None,
        )


class CheckpointIntegrityError(PromptLightError):
    """Checkpoint bytes are truncated, corrupted or of an unknown format"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str, path: str = None):
        super().__init__(
            detail=detail,
            error_code="CHECKPOINT_INTEGRITY_ERROR",
            context={"path": path} if path else None,
        )


class CheckpointMismatchError(PromptLightError):
    """Checkpoint is intact but does not fit the requested use"""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str, path: str = None, expected=None, actual=None):
        context = {"path": path} if path else {}
        if expected is not None:
            context["expected"] = str(expected)
        if actual is not None:
            context["actual"] = str(actual)
        super().__init__(
            detail=detail, error_code="CHECKPOINT_MISMATCH_ERROR", context=context
        )


class TrainingDivergedError(PromptLightError):
    """Loss became NaN or infinite; a state dump was written"""

    exit_code = EXIT_DIVERGED

    def __init__(self, detail: str, dump_path: str = None, iteration: int = None):
        super().__init__(
            detail=detail,
            error_code="TRAINING_DIVERGED",
            context={"dump_path": dump_path, "iteration": iteration},
        )
        self.dump_path = dump_path


class NothingToDoError(PromptLightError):
    """Every requested item was skipped"""

    def __init__(self, detail: str, skipped: int = 0):
        super().__init__(
            detail=detail, error_code="NOTHING_EVALUATED", context={"skipped": skipped}
        )
