"""Repeated random-split experiment: split, train, evaluate, aggregate."""
from __future__ import annotations
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from cloudseg.core.dataset import LabelMask, Sample, SplitSpec, decode_target, random_split, select
from cloudseg.core.errors import ConfigError
from cloudseg.core.metrics import (
    LabelErrors, Thresholds, aggregate, per_image_label_error, per_label_error, ternarize,
)
from cloudseg.core.trainer import TrainConfig, train
from cloudseg.core.unet import UNetConfig, predict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunManifest:
    """What to run: dataset source, seeds, run count and configuration overrides."""
    manifest_path: Optional[str] = None
    synthetic: Optional[int] = None
    out_dir: str = "results"
    seed: int = 0
    runs: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    net: UNetConfig = field(default_factory=UNetConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    ratio: float = 0.8
    oracle: bool = False
    workers: int = 1

    def validate(self) -> None:
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1 (got {self.runs})")
        if (self.manifest_path is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of a dataset manifest or a synthetic sample count")
        if self.synthetic is not None and self.synthetic < 2:
            raise ConfigError(f"synthetic dataset needs at least 2 samples (got {self.synthetic})")
        self.train.validate()
        self.net.validate()

    def run_seed(self, i: int) -> int:
        return self.seed + i


@dataclass(frozen=True)
class RunResult:
    index: int
    seed: int
    split: SplitSpec
    errors: LabelErrors
    per_image: LabelErrors
    final_loss: Optional[float] = None


@dataclass
class ExperimentReport:
    runs: List[RunResult]
    mean: LabelErrors
    mean_per_image: LabelErrors
    elapsed: float = 0.0


def oracle_labels(samples: Sequence[Sample]) -> List[LabelMask]:
    """Predictions equal to the decoded ground truth, independent of the thresholds."""
    return [decode_target(s.target) for s in samples]


def run_once(samples: Sequence[Sample], manifest: RunManifest, index: int) -> RunResult:
    """One split/train/evaluate cycle with seed = master seed + index."""
    seed = manifest.run_seed(index)
    split = random_split([s.id for s in samples], manifest.ratio, seed)
    train_set = select(samples, split.train_ids)
    test_set = select(samples, split.test_ids)
    final_loss = None
    if manifest.oracle:
        pred = oracle_labels(test_set)
    else:
        params, history = train(replace(manifest.train, seed=seed), replace(manifest.net, seed=seed), train_set,
                                log_every=0)
        final_loss = history[-1]
        masks = predict(params, [s.image for s in test_set], manifest.train.batch_size)
        pred = [ternarize(m, manifest.thresholds) for m in masks]
    gt = [s.gt for s in test_set]
    result = RunResult(index=index, seed=seed, split=split, errors=per_label_error(pred, gt),
                       per_image=per_image_label_error(pred, gt), final_loss=final_loss)
    logger.info("run %d (seed %d): sky=%s thin=%s thick=%s", index, seed, *result.errors.as_tuple())
    return result


def _run_job(args: Tuple[Sequence[Sample], RunManifest, int]) -> RunResult:
    return run_once(*args)


def run_experiment(samples: Sequence[Sample], manifest: RunManifest) -> ExperimentReport:
    """All runs of the protocol; rows are ordered by run index whatever the completion order."""
    manifest.validate()
    start = time.time()
    jobs = [(samples, manifest, i) for i in range(manifest.runs)]
    if manifest.workers > 1 and manifest.runs > 1:
        with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    report = ExperimentReport(
        runs=results,
        mean=aggregate([r.errors for r in results]),
        mean_per_image=aggregate([r.per_image for r in results]),
        elapsed=time.time() - start,
    )
    logger.info("%d runs finished in %.1fs; mean sky=%s thin=%s thick=%s",
                len(results), report.elapsed, *report.mean.as_tuple())
    return report


def evaluate_checkpoint(params, samples: Sequence[Sample], th: Thresholds, oracle: bool = False,
                        batch_size: int = 4) -> Tuple[LabelErrors, LabelErrors]:
    """Pooled and per-image errors of a trained model (or the oracle) on ``samples``."""
    if oracle:
        pred = oracle_labels(samples)
    else:
        pred = [ternarize(m, th) for m in predict(params, [s.image for s in samples], batch_size)]
    gt = [s.gt for s in samples]
    return per_label_error(pred, gt), per_image_label_error(pred, gt)


__all__ = [
    'RunManifest', 'RunResult', 'ExperimentReport', 'oracle_labels', 'run_once', 'run_experiment',
    'evaluate_checkpoint',
]
