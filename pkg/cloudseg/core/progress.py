"""Terminal spinner for dataset loading and long training runs."""
from __future__ import annotations
import sys
import threading
import time
from contextlib import contextmanager
from typing import Iterator, Optional


class Spinner:
    """Spinner on stderr with an updatable status suffix (e.g. the current epoch loss).

    Inactive unless stderr is a TTY, so logs and test output stay clean.
    """

    def __init__(self, message: str = "Working", enabled: bool = True, interval: float = 0.1):
        self.message = message
        self.enabled = enabled and sys.stderr.isatty()
        self.interval = interval
        self.status = ""
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._frames = ['|', '/', '-', '\\']
        self._width = 0

    def set_status(self, status: str) -> None:
        self.status = status

    def _line(self, frame: str, started: float) -> str:
        suffix = f" {self.status}" if self.status else ""
        return f"\r{self.message} {frame} [{time.time() - started:.0f}s]{suffix}"

    def _run(self) -> None:
        started = time.time()
        i = 0
        while not self._stop.is_set():
            line = self._line(self._frames[i % len(self._frames)], started)
            self._width = max(self._width, len(line))
            sys.stderr.write(line.ljust(self._width))
            sys.stderr.flush()
            time.sleep(self.interval)
            i += 1
        sys.stderr.write("\r" + ' ' * self._width + "\r")
        sys.stderr.flush()

    def __enter__(self) -> "Spinner":
        if self.enabled:
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self.enabled:
            self._stop.set()
            if self._thread:
                self._thread.join()


@contextmanager
def spinner(message: str = "Working", enabled: bool = True, interval: float = 0.1) -> Iterator[Spinner]:
    with Spinner(message, enabled=enabled, interval=interval) as sp:
        yield sp
