"""Logging configuration for cloudseg."""
from __future__ import annotations
import logging
import sys
from pathlib import Path
from typing import List, Optional

DEFAULT_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
# Parallel experiment runs interleave their lines; the process name tells them apart
WORKER_FORMAT = '%(asctime)s - %(levelname)s - %(processName)s - %(name)s - %(message)s'

QUIET_LOGGERS = ("PIL", "openpyxl")


def configure_logging(level: str = "INFO",
                      log_file: Optional[str] = None,
                      format_str: Optional[str] = None,
                      with_process: bool = False) -> None:
    """Replace the root handlers with stderr (and optionally a file) at ``level``.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file to append log lines to; parent directories are created
        format_str: Optional custom format string
        with_process: Include the process name in every line
    """
    numeric_level = getattr(logging, level.upper(), None)
    if not isinstance(numeric_level, int):
        raise ValueError(f"Invalid log level: {level}")

    formatter = logging.Formatter(format_str or (WORKER_FORMAT if with_process else DEFAULT_FORMAT))
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        try:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_file, mode='a', encoding='utf-8'))
        except OSError as e:
            print(f"Warning: Could not open log file {log_file}: {e}", file=sys.stderr)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
    for handler in handlers:
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    # numpy overflow / invalid-value warnings end up in the log instead of bare stderr
    logging.captureWarnings(True)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)
