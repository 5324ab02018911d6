"""Ternary thresholding and per-label error percentages."""
from __future__ import annotations
from dataclasses import dataclass, astuple
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from cloudseg.core.dataset import Label, LabelMask
from cloudseg.core.errors import ConfigError, ShapeError, UsageError
from cloudseg.core.unet import ProbabilityMask
from cloudseg.utils.constants import DEFAULT_THRESHOLDS

N_LABELS = 3


@dataclass(frozen=True)
class Thresholds:
    t1: float = DEFAULT_THRESHOLDS[0]
    t2: float = DEFAULT_THRESHOLDS[1]

    def __post_init__(self):
        if not (0.0 < self.t1 < self.t2 < 1.0):
            raise ConfigError(f"thresholds need 0 < t1 < t2 < 1 (got t1={self.t1}, t2={self.t2})")


@dataclass(frozen=True)
class LabelErrors:
    """Error percentage per label; None when the label has no ground-truth pixels."""
    sky_pct: Optional[float] = None
    thin_pct: Optional[float] = None
    thick_pct: Optional[float] = None

    def as_tuple(self) -> Tuple[Optional[float], Optional[float], Optional[float]]:
        return astuple(self)

    def __post_init__(self):
        for v in astuple(self):
            if v is not None and not (0.0 <= v <= 100.0):
                raise UsageError(f"error percentage out of range: {v}")


def ternarize(mask: ProbabilityMask, th: Thresholds = Thresholds()) -> LabelMask:
    """[0, t1) -> Sky, [t1, t2) -> Thin, [t2, 1] -> Thick."""
    p = mask.values
    labels = (p >= th.t1).astype(np.uint8) + (p >= th.t2).astype(np.uint8)
    return LabelMask(labels)


def confusion_matrix(pred: Sequence[LabelMask], gt: Sequence[LabelMask]) -> np.ndarray:
    """Pooled 3x3 pixel counts, rows = ground truth, columns = prediction."""
    if len(pred) != len(gt):
        raise ShapeError(f"prediction and ground-truth lists differ in length ({len(pred)} vs {len(gt)})")
    hist = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    for p, g in zip(pred, gt):
        if p.shape != g.shape:
            raise ShapeError("prediction and ground truth shapes differ", p.shape, g.shape)
        codes = N_LABELS * g.labels.astype(np.int64).ravel() + p.labels.astype(np.int64).ravel()
        hist += np.bincount(codes, minlength=N_LABELS ** 2).reshape(N_LABELS, N_LABELS)
    return hist


def errors_from_confusion(hist: np.ndarray) -> LabelErrors:
    values: List[Optional[float]] = []
    for label in Label:
        total = int(hist[label].sum())
        missed = total - int(hist[label, label])
        values.append(100.0 * missed / total if total else None)
    return LabelErrors(*values)


def per_label_error(pred: Sequence[LabelMask], gt: Sequence[LabelMask]) -> LabelErrors:
    """100 * (# gt=L pixels predicted otherwise) / (# gt=L pixels), pooled over all images."""
    return errors_from_confusion(confusion_matrix(pred, gt))


def aggregate(runs: Sequence[LabelErrors]) -> LabelErrors:
    """Per-label arithmetic mean over the runs where the label is present."""
    if not runs:
        raise UsageError("aggregate needs at least one run")
    means: List[Optional[float]] = []
    for column in zip(*(r.as_tuple() for r in runs)):
        present = [v for v in column if v is not None]
        means.append(sum(present) / len(present) if present else None)
    return LabelErrors(*means)


def per_image_label_error(pred: Sequence[LabelMask], gt: Sequence[LabelMask]) -> LabelErrors:
    """Mean of per-image percentages (the unpooled reading, reported in verbose mode)."""
    if len(pred) != len(gt):
        raise ShapeError(f"prediction and ground-truth lists differ in length ({len(pred)} vs {len(gt)})")
    return aggregate([per_label_error([p], [g]) for p, g in zip(pred, gt)])


def threshold_sweep(masks: Sequence[ProbabilityMask], gt: Sequence[LabelMask],
                    pairs: Iterable[Tuple[float, float]]) -> List[Tuple[Thresholds, LabelErrors]]:
    """Pooled LabelErrors for each (t1, t2) pair."""
    results = []
    for t1, t2 in pairs:
        th = Thresholds(t1, t2)
        results.append((th, per_label_error([ternarize(m, th) for m in masks], gt)))
    return results


__all__ = [
    'Thresholds', 'LabelErrors', 'ternarize', 'confusion_matrix', 'errors_from_confusion',
    'per_label_error', 'aggregate', 'per_image_label_error', 'threshold_sweep',
]
