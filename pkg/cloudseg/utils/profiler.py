"""Wall-clock sections for the training and evaluation hot paths (``--profile``)."""
from __future__ import annotations
import contextlib
import logging
import time
from dataclasses import dataclass
from typing import Dict, Iterator

import pandas as pd

logger = logging.getLogger(__name__)


@dataclass
class SectionTiming:
    calls: int = 0
    total: float = 0.0
    longest: float = 0.0

    def add(self, elapsed: float) -> None:
        self.calls += 1
        self.total += elapsed
        self.longest = max(self.longest, elapsed)


class Profiler:
    """Accumulates time per named section; a no-op until ``enabled`` is set."""

    def __init__(self, enabled: bool = False):
        self.enabled = enabled
        self.sections: Dict[str, SectionTiming] = {}

    @contextlib.contextmanager
    def section(self, name: str) -> Iterator[None]:
        if not self.enabled:
            yield
            return
        start = time.perf_counter()
        try:
            yield
        finally:
            self.sections.setdefault(name, SectionTiming()).add(time.perf_counter() - start)

    def reset(self) -> None:
        self.sections.clear()

    def frame(self) -> pd.DataFrame:
        """One row per section, slowest first, with its share of all timed work."""
        rows = [
            {'section': name, 'calls': t.calls, 'total_s': t.total,
             'mean_ms': 1000.0 * t.total / t.calls, 'max_ms': 1000.0 * t.longest}
            for name, t in self.sections.items()
        ]
        df = pd.DataFrame(rows, columns=['section', 'calls', 'total_s', 'mean_ms', 'max_ms'])
        grand = df['total_s'].sum()
        df['share'] = df['total_s'] / grand if grand > 0 else 0.0
        return df.sort_values('total_s', ascending=False, ignore_index=True)

    def log_report(self) -> None:
        if not self.enabled or not self.sections:
            return
        table = self.frame().to_string(index=False, float_format=lambda v: f"{v:.4f}")
        logger.info("Profile:\n%s", table)


# Global profiler instance
profiler = Profiler()
