# Error taxonomy shared by the engine and the CLI exit-code contract.
from __future__ import annotations
from enum import Enum, auto
from typing import Optional, Sequence


class ErrorCategory(Enum):
    USER_INPUT = auto()
    DATASET = auto()
    CHECKPOINT = auto()
    NUMERIC = auto()
    CONFIG = auto()
    USAGE = auto()
    INTERNAL = auto()


class CloudSegException(Exception):
    category: ErrorCategory = ErrorCategory.INTERNAL

    def __init__(self, message: str, *, category: ErrorCategory | None = None):
        super().__init__(message)
        if category:
            self.category = category


class ShapeError(CloudSegException):
    category = ErrorCategory.USAGE

    def __init__(self, message: str, *shapes: Sequence[int]):
        if shapes:
            message = f"{message} (shapes: {', '.join(str(tuple(s)) for s in shapes)})"
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class UsageError(CloudSegException):
    category = ErrorCategory.USAGE


class ConfigError(CloudSegException):
    category = ErrorCategory.CONFIG


class DatasetError(CloudSegException):
    category = ErrorCategory.DATASET

    def __init__(self, message: str, *, path: Optional[str] = None, value: object = None):
        parts = [message]
        if path is not None:
            parts.append(f"path={path}")
        if value is not None:
            parts.append(f"value={value}")
        super().__init__(" | ".join(parts))
        self.path = path
        self.value = value


class CheckpointError(CloudSegException):
    category = ErrorCategory.CHECKPOINT


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    def __init__(self, message: str, *, tensor: Optional[str] = None):
        if tensor is not None:
            message = f"{message} (tensor '{tensor}')"
        super().__init__(message)
        self.tensor = tensor


class DivergenceError(CloudSegException):
    category = ErrorCategory.NUMERIC

    def __init__(self, message: str, *, epoch: Optional[int] = None, step: Optional[int] = None,
                 diagnostics: Optional[dict] = None):
        where = []
        if epoch is not None:
            where.append(f"epoch={epoch}")
        if step is not None:
            where.append(f"step={step}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        if diagnostics:
            message += " " + ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.diagnostics = dict(diagnostics or {})


_EXIT_CODES = {
    ErrorCategory.USER_INPUT: 2,
    ErrorCategory.DATASET: 2,
    ErrorCategory.CHECKPOINT: 2,
    ErrorCategory.CONFIG: 2,
    ErrorCategory.NUMERIC: 3,
}


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the CLI exit-code contract (0/2/3, 1 otherwise)."""
    if isinstance(exc, CloudSegException):
        return _EXIT_CODES.get(exc.category, 1)
    return 1


__all__ = [
    'ErrorCategory', 'CloudSegException', 'ShapeError', 'UsageError', 'ConfigError',
    'DatasetError', 'CheckpointError', 'CheckpointMagicError', 'CheckpointVersionError',
    'CheckpointTruncatedError', 'DivergenceError', 'exit_code_for',
]
