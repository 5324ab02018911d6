"""Binary checkpoint container.

Layout (all integers little-endian):

  magic "NMBS" | u32 version | u32 config length | config block (UTF-8 key=value lines)
  then per tensor: u16 name length | name | u8 rank | u32 dims[rank] | float32 data

Tensors are written as ``param/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``.
The config block stores both configurations, the epoch reached, the Adam step
counter, the loss history and the tensor count.
"""
from __future__ import annotations
import io
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Tuple

import numpy as np

from cloudseg.core.errors import (
    CheckpointError, CheckpointMagicError, CheckpointTruncatedError, CheckpointVersionError,
)
from cloudseg.core.tensor import DTYPE, Tensor
from cloudseg.core.trainer import TrainConfig, Trainer
from cloudseg.core.unet import UNetConfig, UNetParams
from cloudseg.utils.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sII")


@dataclass
class Checkpoint:
    net_config: UNetConfig
    train_config: TrainConfig
    epoch: int
    params: "OrderedDict[str, np.ndarray]"
    adam_m: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    adam_v: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    adam_t: int = 0
    history: List[float] = field(default_factory=list)
    format_version: int = CHECKPOINT_VERSION

    def to_params(self) -> UNetParams:
        out = UNetParams(config=self.net_config)
        for name, arr in self.params.items():
            out.tensors[name] = Tensor(arr, requires_grad=True, name=name)
        return out


def from_trainer(trainer: Trainer) -> Checkpoint:
    return Checkpoint(
        net_config=trainer.net_config,
        train_config=trainer.config,
        epoch=trainer.epoch,
        params=OrderedDict((n, p.data.copy()) for n, p in trainer.params),
        adam_m=OrderedDict((n, a.copy()) for n, a in trainer.optimizer.m.items()),
        adam_v=OrderedDict((n, a.copy()) for n, a in trainer.optimizer.v.items()),
        adam_t=trainer.optimizer.t,
        history=list(trainer.history),
    )


def to_trainer(ckpt: Checkpoint, train_config: Optional[TrainConfig] = None) -> Trainer:
    """Rebuild a Trainer that continues exactly where the checkpoint stopped.

    ``train_config`` may raise the epoch budget; the remaining fields should match.
    """
    trainer = Trainer(train_config or ckpt.train_config, ckpt.net_config, params=ckpt.to_params())
    if ckpt.adam_m:
        trainer.optimizer.m = OrderedDict((n, a.copy()) for n, a in ckpt.adam_m.items())
        trainer.optimizer.v = OrderedDict((n, a.copy()) for n, a in ckpt.adam_v.items())
    trainer.optimizer.t = ckpt.adam_t
    trainer.epoch = ckpt.epoch
    trainer.history = list(ckpt.history)
    return trainer


# --- Config block ----------------------------------------------------------

def _encode_config(ckpt: Checkpoint, tensor_count: int) -> bytes:
    lines = [f"format_version={ckpt.format_version}"]
    for f in fields(UNetConfig):
        lines.append(f"unet.{f.name}={getattr(ckpt.net_config, f.name)}")
    for f in fields(TrainConfig):
        value = getattr(ckpt.train_config, f.name)
        lines.append(f"train.{f.name}={value!r}")
    lines.append(f"epoch={ckpt.epoch}")
    lines.append(f"adam_t={ckpt.adam_t}")
    lines.append("history=" + ",".join(repr(float(h)) for h in ckpt.history))
    lines.append(f"tensor_count={tensor_count}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_bool(text: str) -> bool:
    if text not in ("True", "False"):
        raise CheckpointError(f"bad boolean in config block: {text!r}")
    return text == "True"


def _decode_config(block: bytes) -> Tuple[Dict[str, str], UNetConfig, TrainConfig]:
    try:
        text = block.decode("utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointError(f"config block is not UTF-8: {e}")
    kv: Dict[str, str] = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed config line: {line!r}")
        kv[key] = value
    try:
        net = UNetConfig(**{f.name: int(kv[f"unet.{f.name}"]) for f in fields(UNetConfig)})
        train_kwargs = {}
        for f in fields(TrainConfig):
            raw = kv[f"train.{f.name}"]
            if f.name == "shuffle_each_epoch":
                train_kwargs[f.name] = _parse_bool(raw)
            elif f.name in ("epochs", "batch_size", "seed"):
                train_kwargs[f.name] = int(raw)
            else:
                train_kwargs[f.name] = float(raw)
        train = TrainConfig(**train_kwargs)
    except KeyError as e:
        raise CheckpointError(f"config block missing key {e}")
    except ValueError as e:
        raise CheckpointError(f"bad value in config block: {e}")
    return kv, net, train


# --- Read / write ----------------------------------------------------------

def _write_tensor(out: BinaryIO, name: str, arr: np.ndarray) -> None:
    raw_name = name.encode("utf-8")
    out.write(struct.pack("<H", len(raw_name)))
    out.write(raw_name)
    out.write(struct.pack("<B", arr.ndim))
    out.write(np.asarray(arr.shape, dtype="<u4").tobytes())
    out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    entries: List[Tuple[str, np.ndarray]] = []
    entries += [(f"param/{n}", a) for n, a in ckpt.params.items()]
    entries += [(f"adam_m/{n}", a) for n, a in ckpt.adam_m.items()]
    entries += [(f"adam_v/{n}", a) for n, a in ckpt.adam_v.items()]
    block = _encode_config(ckpt, len(entries))
    buf = io.BytesIO()
    buf.write(_HEADER.pack(CHECKPOINT_MAGIC, ckpt.format_version, len(block)))
    buf.write(block)
    for name, arr in entries:
        _write_tensor(buf, name, arr)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(buf.getvalue())
    logger.info("Saved checkpoint %s (epoch %d, %d tensors)", path, ckpt.epoch, len(entries))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str, tensor: Optional[str] = None) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(f"file ends inside {what}", tensor=tensor)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def load_checkpoint(path: str) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    r = _Reader(data)
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointMagicError(f"bad magic bytes {data[:4]!r} in {path} (expected {CHECKPOINT_MAGIC!r})")
    magic, version, block_len = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    kv, net, train = _decode_config(r.take(block_len, "config block"))

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while not r.exhausted:
        (name_len,) = struct.unpack("<H", r.take(2, "tensor header"))
        raw_name = r.take(name_len, "tensor name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"tensor name is not UTF-8: {e}")
        (rank,) = struct.unpack("<B", r.take(1, "tensor rank", name))
        dims = tuple(int(d) for d in np.frombuffer(r.take(4 * rank, "tensor dims", name), dtype="<u4"))
        count = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(r.take(4 * count, "tensor data", name), dtype="<f4")
        tensors[name] = values.astype(DTYPE).reshape(dims)

    expected = int(kv.get("tensor_count", len(tensors)))
    if len(tensors) != expected:
        raise CheckpointTruncatedError(f"found {len(tensors)} tensors, config block lists {expected}")

    def _group(prefix: str) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k[len(prefix):], v) for k, v in tensors.items() if k.startswith(prefix))

    history_text = kv.get("history", "")
    ckpt = Checkpoint(
        net_config=net,
        train_config=train,
        epoch=int(kv.get("epoch", 0)),
        params=_group("param/"),
        adam_m=_group("adam_m/"),
        adam_v=_group("adam_v/"),
        adam_t=int(kv.get("adam_t", 0)),
        history=[float(h) for h in history_text.split(",")] if history_text else [],
        format_version=version,
    )
    logger.debug("Loaded checkpoint %s (epoch %d, %d tensors)", path, ckpt.epoch, len(tensors))
    return ckpt


__all__ = ['Checkpoint', 'from_trainer', 'to_trainer', 'save_checkpoint', 'load_checkpoint']
