"""Adam training loop with seeded per-epoch shuffling and exact resumption."""
from __future__ import annotations
import logging
import math
import time
from dataclasses import dataclass, asdict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cloudseg.core.dataset import Sample
from cloudseg.core.errors import ConfigError, DivergenceError, UsageError
from cloudseg.core.metrics import LabelErrors, Thresholds, per_label_error, ternarize
from cloudseg.core.tensor import DTYPE, Tape, Tensor, backward, mse_loss
from cloudseg.core.unet import UNetConfig, UNetParams, forward, init_params, predict
from cloudseg.utils.profiler import profiler

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle_each_epoch: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1 (got {self.epochs})")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1 (got {self.batch_size})")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0 (got {self.learning_rate})")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0) or self.eps <= 0:
            raise ConfigError("Adam needs 0 <= beta1, beta2 < 1 and eps > 0")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, t: int,
              config: TrainConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam update; returns new (param, m, v)."""
    if param.shape != grad.shape or m.shape != param.shape or v.shape != param.shape:
        raise UsageError(f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}, "
                         f"m {m.shape}, v {v.shape}")
    if t < 1:
        raise UsageError(f"adam_step needs t >= 1 (got {t})")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient",
                              diagnostics={"nan": int(np.isnan(grad).sum()), "inf": int(np.isinf(grad).sum())})
    b1, b2 = config.beta1, config.beta2
    m_new = b1 * m + (1.0 - b1) * grad
    v_new = b2 * v + (1.0 - b2) * (grad * grad)
    m_hat = m_new / (1.0 - b1 ** t)
    v_hat = v_new / (1.0 - b2 ** t)
    update = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return (param - update).astype(param.dtype, copy=False), m_new.astype(m.dtype, copy=False), \
        v_new.astype(v.dtype, copy=False)


class Adam:
    """Per-parameter first and second moments keyed by parameter name."""

    def __init__(self, params: UNetParams, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m: Dict[str, np.ndarray] = {n: np.zeros_like(p.data) for n, p in params}
        self.v: Dict[str, np.ndarray] = {n: np.zeros_like(p.data) for n, p in params}

    def step(self, params: UNetParams) -> None:
        self.t += 1
        for name, p in params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            try:
                p.data, self.m[name], self.v[name] = adam_step(p.data, grad, self.m[name], self.v[name],
                                                               self.t, self.config)
            except DivergenceError as e:
                e.diagnostics.setdefault("param", name)
                raise


def _stack(samples: Sequence[Sample]) -> Tuple[Tensor, Tensor]:
    x = np.stack([s.image for s in samples]).astype(DTYPE, copy=False)
    y = np.stack([s.target for s in samples])[:, None].astype(DTYPE, copy=False)
    return Tensor(x), Tensor(y)


def epoch_order(n: int, seed: int, epoch: int, shuffle: bool = True) -> np.ndarray:
    """Sample order for one epoch, seeded by (seed, epoch)."""
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


EpochCallback = Callable[[int, float], None]


class Trainer:
    """Owns parameters, optimizer state and loss history for one training run."""

    def __init__(self, config: TrainConfig, net_config: UNetConfig, params: Optional[UNetParams] = None):
        config.validate()
        net_config.validate()
        self.config = config
        self.net_config = net_config
        self.params = params if params is not None else init_params(net_config)
        self.optimizer = Adam(self.params, config)
        self.epoch = 0
        self.history: List[float] = []

    def steps_per_epoch(self, n: int) -> int:
        return math.ceil(n / self.config.batch_size)

    def train_step(self, batch: Sequence[Sample], epoch: int, step: int) -> float:
        x, y = _stack(batch)
        tape = Tape()
        with profiler.section("forward"):
            out = forward(self.params, x, tape)
            loss = mse_loss(out, y, tape=tape)
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError("non-finite loss", epoch=epoch, step=step, diagnostics={"loss": value})
        with profiler.section("backward"):
            self.params.zero_grad()
            backward(loss, tape)
        with profiler.section("optimizer"):
            try:
                self.optimizer.step(self.params)
            except DivergenceError as e:
                raise DivergenceError("non-finite gradient", epoch=epoch, step=step,
                                      diagnostics=e.diagnostics) from e
        return value

    def fit(self, samples: Sequence[Sample], epochs: Optional[int] = None,
            on_epoch: Optional[EpochCallback] = None, log_every: int = 10) -> List[float]:
        """Train until ``epochs`` (default config.epochs) have run in total; returns the loss history."""
        if not samples:
            raise UsageError("training needs at least one sample")
        target = self.config.epochs if epochs is None else epochs
        n = len(samples)
        bs = self.config.batch_size
        start = time.time()
        while self.epoch < target:
            order = epoch_order(n, self.config.seed, self.epoch, self.config.shuffle_each_epoch)
            total = 0.0
            for step, lo in enumerate(range(0, n, bs)):
                batch = [samples[i] for i in order[lo:lo + bs]]
                total += self.train_step(batch, self.epoch, step) * len(batch)
            mean_loss = total / n
            self.history.append(mean_loss)
            self.epoch += 1
            if on_epoch is not None:
                on_epoch(self.epoch, mean_loss)
            if log_every and (self.epoch % log_every == 0 or self.epoch == target):
                logger.info("epoch %d/%d loss=%.6f (%.1fs)", self.epoch, target, mean_loss, time.time() - start)
        return self.history

    def checkpoint(self):
        """Snapshot of parameters, Adam moments, epoch and history."""
        from cloudseg.core.checkpoint import from_trainer
        return from_trainer(self)

    @classmethod
    def from_checkpoint(cls, ckpt, config: Optional[TrainConfig] = None) -> "Trainer":
        from cloudseg.core.checkpoint import to_trainer
        return to_trainer(ckpt, config)


def train(config: TrainConfig, net_config: UNetConfig, samples: Sequence[Sample],
          on_epoch: Optional[EpochCallback] = None, log_every: int = 10) -> Tuple[UNetParams, List[float]]:
    """Fresh training run; fully determined by the seeds and the sample order."""
    trainer = Trainer(config, net_config)
    history = trainer.fit(samples, on_epoch=on_epoch, log_every=log_every)
    return trainer.params, history


def evaluate(params: UNetParams, samples: Sequence[Sample], th: Thresholds = Thresholds(),
             batch_size: int = 4) -> LabelErrors:
    """Pooled per-label error of the thresholded predictions against each sample's ground truth."""
    with profiler.section("evaluate"):
        masks = predict(params, [s.image for s in samples], batch_size)
        return per_label_error([ternarize(m, th) for m in masks], [s.gt for s in samples])


__all__ = ['TrainConfig', 'adam_step', 'Adam', 'epoch_order', 'Trainer', 'train', 'evaluate']
