"""U-Net encoder-decoder built from the tensor ops.

Layer list for depth D and base width B (c_k = B * 2**k, c_D is the bottleneck):

  enc{k}.conv1   3x3  c_{k-1} -> c_k   (c_{-1} = in_channels), relu
  enc{k}.conv2   3x3  c_k     -> c_k,  relu, then 2x2 max pool
  bott.conv1     3x3  c_{D-1} -> c_D,  relu
  bott.conv2     3x3  c_D     -> c_D,  relu
  dec{k}.up      upsample x2, 3x3 c_{k+1} -> c_k, relu
  dec{k}.conv1   3x3  2*c_k   -> c_k   (after concatenating the enc{k} skip), relu
  dec{k}.conv2   3x3  c_k     -> c_k,  relu
  head           1x1  c_0     -> out_channels, logistic

All 3x3 convolutions use padding 1, so spatial size only changes at pool and
upsample boundaries.
"""
from __future__ import annotations
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from cloudseg.core.errors import ConfigError, ShapeError
from cloudseg.core.tensor import (
    DTYPE, Tape, Tensor, concat_channels, conv2d, logistic, max_pool2, relu, upsample2,
)
from cloudseg.utils.constants import DEFAULT_RESOLUTION

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_channels: int = 16
    in_channels: int = 3
    out_channels: int = 1
    seed: int = 0
    resolution: int = DEFAULT_RESOLUTION

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1 (got {self.depth})")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1 (got {self.base_channels})")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("in_channels and out_channels must be >= 1")
        if self.resolution < 2 ** self.depth or self.resolution % (2 ** self.depth):
            raise ConfigError(
                f"resolution {self.resolution} is not divisible by 2**depth = {2 ** self.depth}")

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass
class UNetParams:
    """Named parameter tensors in creation order."""
    config: UNetConfig
    tensors: "OrderedDict[str, Tensor]" = field(default_factory=OrderedDict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> List[str]:
        return list(self.tensors)

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


@dataclass(frozen=True)
class ProbabilityMask:
    """Per-pixel cloudiness in [0, 1] at the working resolution."""
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeError("probability mask must be 2-D", self.values.shape)
        if self.values.size and (np.nanmin(self.values) < 0.0 or np.nanmax(self.values) > 1.0
                                 or not np.all(np.isfinite(self.values))):
            raise ShapeError("probability mask values must lie in [0, 1]", self.values.shape)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def layer_shapes(config: UNetConfig) -> List[Tuple[str, Tuple[int, int, int, int]]]:
    """Weight shapes (co, ci, kh, kw) of every convolution, in parameter order."""
    d = config.depth
    c = config.channels
    layers: List[Tuple[str, Tuple[int, int, int, int]]] = []
    prev = config.in_channels
    for k in range(d):
        layers.append((f"enc{k}.conv1", (c(k), prev, 3, 3)))
        layers.append((f"enc{k}.conv2", (c(k), c(k), 3, 3)))
        prev = c(k)
    layers.append(("bott.conv1", (c(d), prev, 3, 3)))
    layers.append(("bott.conv2", (c(d), c(d), 3, 3)))
    for k in reversed(range(d)):
        layers.append((f"dec{k}.up", (c(k), c(k + 1), 3, 3)))
        layers.append((f"dec{k}.conv1", (c(k), 2 * c(k), 3, 3)))
        layers.append((f"dec{k}.conv2", (c(k), c(k), 3, 3)))
    layers.append(("head", (config.out_channels, c(0), 1, 1)))
    return layers


def param_count(config: UNetConfig) -> int:
    """Total number of learnable scalars for ``config``."""
    return sum(int(np.prod(shape)) + shape[0] for _, shape in layer_shapes(config))


def init_params(config: UNetConfig) -> UNetParams:
    """Fan-in scaled uniform weights, zero biases; fully determined by ``config.seed``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = UNetParams(config=config)
    for name, shape in layer_shapes(config):
        fan_in = shape[1] * shape[2] * shape[3]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=shape).astype(DTYPE)
        params.tensors[f"{name}.weight"] = Tensor(w, requires_grad=True, name=f"{name}.weight")
        params.tensors[f"{name}.bias"] = Tensor(np.zeros(shape[0], dtype=DTYPE), requires_grad=True,
                                                name=f"{name}.bias")
    logger.debug("Initialised U-Net depth=%d base=%d (%d parameters)",
                 config.depth, config.base_channels, params.count())
    return params


def _conv(params: UNetParams, name: str, x: Tensor, tape: Optional[Tape], padding: int = 1) -> Tensor:
    return conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], 1, padding, tape=tape)


def _block(params: UNetParams, prefix: str, x: Tensor, tape: Optional[Tape]) -> Tensor:
    x = relu(_conv(params, f"{prefix}.conv1", x, tape), tape=tape)
    return relu(_conv(params, f"{prefix}.conv2", x, tape), tape=tape)


def forward(params: UNetParams, batch: Tensor, tape: Optional[Tape] = None,
            taps: Optional[Dict[str, Tuple[int, ...]]] = None) -> Tensor:
    """Map an (n, in_channels, r, r) batch to an (n, out_channels, r, r) probability batch.

    Ops are recorded on ``tape`` when one is given. ``taps`` collects the shape
    of every encoder, bottleneck and decoder feature map by name.
    """
    cfg = params.config
    if batch.data.ndim != 4 or batch.shape[1] != cfg.in_channels \
            or batch.shape[2] != cfg.resolution or batch.shape[3] != cfg.resolution:
        raise ShapeError(
            f"U-Net expects (n, {cfg.in_channels}, {cfg.resolution}, {cfg.resolution}) input", batch.shape)

    skips: List[Tensor] = []
    x = batch
    for k in range(cfg.depth):
        x = _block(params, f"enc{k}", x, tape)
        skips.append(x)
        if taps is not None:
            taps[f"enc{k}"] = x.shape
        x = max_pool2(x, tape=tape)
    x = _block(params, "bott", x, tape)
    if taps is not None:
        taps["bott"] = x.shape
    for k in reversed(range(cfg.depth)):
        x = relu(_conv(params, f"dec{k}.up", upsample2(x, tape=tape), tape), tape=tape)
        x = concat_channels(x, skips[k], tape=tape)
        x = _block(params, f"dec{k}", x, tape)
        if taps is not None:
            taps[f"dec{k}"] = x.shape
    return logistic(_conv(params, "head", x, tape, padding=0), tape=tape)


def mask_of(output: Tensor) -> ProbabilityMask:
    """View a single-sample, single-channel output as a ProbabilityMask."""
    if output.data.ndim != 4 or output.shape[0] != 1 or output.shape[1] != 1:
        raise ShapeError("mask_of needs a (1, 1, h, w) tensor", output.shape)
    return ProbabilityMask(output.data[0, 0])


def predict(params: UNetParams, images: Sequence[np.ndarray], batch_size: int = 4) -> List[ProbabilityMask]:
    """Inference without a tape over (c, h, w) images, in input order."""
    masks: List[ProbabilityMask] = []
    for start in range(0, len(images), max(1, batch_size)):
        chunk = np.stack(images[start:start + batch_size]).astype(DTYPE, copy=False)
        out = forward(params, Tensor(chunk))
        for i in range(out.shape[0]):
            masks.append(mask_of(Tensor._wrap(out.data[i:i + 1], requires_grad=False)))
    return masks


__all__ = [
    'UNetConfig', 'UNetParams', 'ProbabilityMask', 'layer_shapes', 'param_count',
    'init_params', 'forward', 'mask_of', 'predict',
]
