"""Validation utilities for cloudseg inputs."""
from __future__ import annotations
from typing import Iterable, Optional
import os

from cloudseg.core.errors import CloudSegException, ErrorCategory


class ValidationError(CloudSegException):
    """Raised for unusable paths and arguments supplied by the user."""
    category = ErrorCategory.USER_INPUT


def validate_input_file(filepath: str, extensions: Optional[Iterable[str]] = None) -> None:
    """Validate that an input file exists, is readable and has an accepted extension."""
    if not filepath:
        raise ValidationError("No input file given")
    if not os.path.exists(filepath):
        raise ValidationError(f"Input file not found: {filepath}")
    if not os.path.isfile(filepath):
        raise ValidationError(f"Path is not a file: {filepath}")
    if not os.access(filepath, os.R_OK):
        raise ValidationError(f"File not readable: {filepath}")
    if extensions is not None:
        exts = tuple(e.lower() for e in extensions)
        if not filepath.lower().endswith(exts):
            raise ValidationError(f"Unsupported file type: {filepath} (expected {', '.join(exts)})")


def validate_output_dir(path: str, create: bool = True) -> None:
    """Validate that an output directory exists (creating it if asked) and is writable."""
    if not path:
        raise ValidationError("No output directory given")
    if not os.path.exists(path):
        if not create:
            raise ValidationError(f"Output directory does not exist: {path}")
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as e:
            raise ValidationError(f"Failed to create directory {path}: {e}")
    if not os.path.isdir(path):
        raise ValidationError(f"Output path is not a directory: {path}")
    if not os.access(path, os.W_OK):
        raise ValidationError(f"Output directory not writable: {path}")


def validate_output_path(filepath: str, create_dirs: bool = True) -> None:
    """Validate that the parent directory of an output file is usable."""
    if not filepath:
        raise ValidationError("No output path given")
    directory = os.path.dirname(filepath)
    if directory:
        validate_output_dir(directory, create=create_dirs)


def validate_positive(name: str, value, allow_zero: bool = False) -> None:
    if value is None:
        return
    if value < 0 or (value == 0 and not allow_zero):
        raise ValidationError(f"--{name} must be {'>= 0' if allow_zero else '> 0'} (got {value})")
