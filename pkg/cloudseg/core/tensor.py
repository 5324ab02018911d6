"""Dense tensors with a recording tape for reverse-mode gradients.

Every numeric array in the engine is a :class:`Tensor` wrapping a float32
numpy array. Operations are plain functions; when given a :class:`Tape` they
record a backward closure, otherwise they run in inference mode.

Convolution lowers to im2col + one matmul. The column layout is row-major over
(input channel, kernel row, kernel column), so the reduction order for each
output cell is fixed and results repeat bitwise within a build.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cloudseg.core.errors import ShapeError, UsageError

logger = logging.getLogger(__name__)

DTYPE = np.float32

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """A dense real array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=DTYPE):
        arr = np.array(data, dtype=dtype, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d < 1 for d in arr.shape):
            raise ShapeError("tensor dimensions must all be >= 1", arr.shape)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # Internal constructor: takes ownership of arr without copying.
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = requires_grad
        t.name = None
        return t

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False, name: Optional[str] = None) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=DTYPE), requires_grad=requires_grad, name=name)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of executed ops, replayed in reverse by :func:`backward`."""

    def __init__(self) -> None:
        self.records: List[_Record] = []

    def __len__(self) -> int:
        return len(self.records)

    def ops(self) -> List[str]:
        return [r.op for r in self.records]

    def _record(self, op: str, inputs: Sequence[Tensor], out_data: np.ndarray, fn: BackwardFn) -> Tensor:
        out = Tensor._wrap(out_data, requires_grad=True)
        self.records.append(_Record(op, tuple(inputs), out, fn))
        return out


def _emit(op: str, tape: Optional[Tape], inputs: Sequence[Tensor], out_data: np.ndarray, fn: BackwardFn) -> Tensor:
    if tape is not None and any(t.requires_grad for t in inputs):
        return tape._record(op, inputs, out_data, fn)
    return Tensor._wrap(out_data, requires_grad=False)


def _require_rank4(op: str, t: Tensor) -> None:
    if t.data.ndim != 4:
        raise ShapeError(f"{op} expects a rank-4 (n, c, h, w) tensor", t.shape)


# --- Forward ops -----------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0,
           *, tape: Optional[Tape] = None) -> Tensor:
    """2-D cross-correlation with zero padding and per-channel bias."""
    _require_rank4("conv2d", x)
    _require_rank4("conv2d", weight)
    n, ci, h, w = x.shape
    co, wci, kh, kw = weight.shape
    if wci != ci:
        raise ShapeError("conv2d input channels do not match weight", x.shape, weight.shape)
    if bias.size != co:
        raise ShapeError("conv2d bias length must equal output channels", bias.shape, weight.shape)
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and padding >= 0 (stride={stride}, padding={padding})")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError("conv2d kernel larger than padded input", x.shape, weight.shape)
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    # (n, ci, ho, wo, kh, kw) -> rows (n, ho, wo), columns (ci, kh, kw)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, ci * kh * kw)
    wmat = weight.data.reshape(co, ci * kh * kw)
    out = cols @ wmat.T
    out += bias.data.reshape(1, co)
    out_data = np.ascontiguousarray(out.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))

    def _backward(g: np.ndarray):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, co)
        dw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        db = g2.sum(axis=0).reshape(bias.shape) if bias.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, ci, kh, kw)
            dxp = np.zeros(xp.shape, dtype=np.result_type(g.dtype, xp.dtype))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
        return dx, dw, db

    return _emit("conv2d", tape, (x, weight, bias), out_data, _backward)


def max_pool2(x: Tensor, *, tape: Optional[Tape] = None) -> Tensor:
    """2x2 max pooling, stride 2; ties go to the first cell in scan order."""
    _require_rank4("max_pool2", x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError("max_pool2 needs even height and width", x.shape)
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out_data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def _backward(g: np.ndarray):
        onehot = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(onehot, idx[..., None], g[..., None], axis=-1)
        dx = onehot.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (dx,)

    return _emit("max_pool2", tape, (x,), np.ascontiguousarray(out_data), _backward)


def upsample2(x: Tensor, *, tape: Optional[Tape] = None) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    _require_rank4("upsample2", x)
    n, c, h, w = x.shape
    out_data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def _backward(g: np.ndarray):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _emit("upsample2", tape, (x,), out_data, _backward)


def concat_channels(a: Tensor, b: Tensor, *, tape: Optional[Tape] = None) -> Tensor:
    """Stack b's channels after a's."""
    _require_rank4("concat_channels", a)
    _require_rank4("concat_channels", b)
    na, ca, ha, wa = a.shape
    nb, cb, hb, wb = b.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError("concat_channels needs matching batch and spatial dims", a.shape, b.shape)
    out_data = np.concatenate([a.data, b.data], axis=1)

    def _backward(g: np.ndarray):
        return g[:, :ca], g[:, ca:]

    return _emit("concat_channels", tape, (a, b), out_data, _backward)


def relu(x: Tensor, *, tape: Optional[Tape] = None) -> Tensor:
    mask = x.data > 0
    out_data = np.where(mask, x.data, 0).astype(x.data.dtype, copy=False)

    def _backward(g: np.ndarray):
        return (g * mask,)

    return _emit("relu", tape, (x,), out_data, _backward)


def _stable_logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    # keep saturated values strictly inside (0, 1) at the working precision
    one = np.ones((), dtype=out.dtype)
    return np.clip(out, np.finfo(out.dtype).tiny, np.nextafter(one, 0 * one), out=out)


def logistic(x: Tensor, *, tape: Optional[Tape] = None) -> Tensor:
    """Elementwise 1/(1+exp(-x)), branching on sign so |x| > 80 cannot overflow."""
    y = _stable_logistic(x.data)

    def _backward(g: np.ndarray):
        return (g * y * (1 - y),)

    return _emit("logistic", tape, (x,), y, _backward)


def mse_loss(pred: Tensor, target: Tensor, *, tape: Optional[Tape] = None) -> Tensor:
    """Mean squared error over all elements, returned as a (1, 1, 1, 1) tensor."""
    if pred.shape != target.shape:
        raise ShapeError("mse_loss needs identical shapes", pred.shape, target.shape)
    diff = pred.data - target.data
    count = diff.size
    value = np.mean(np.square(diff, dtype=np.float64))
    out_data = np.full((1, 1, 1, 1), value, dtype=pred.data.dtype)

    def _backward(g: np.ndarray):
        scale = g.reshape(-1)[0] * 2.0 / count
        dpred = (diff * scale).astype(pred.data.dtype, copy=False)
        dtarget = -dpred if target.requires_grad else None
        return dpred, dtarget

    return _emit("mse_loss", tape, (pred, target), out_data, _backward)


def sum_all(x: Tensor, weights: Optional[np.ndarray] = None, *, tape: Optional[Tape] = None) -> Tensor:
    """Sum of all elements, optionally weighted elementwise by a constant array."""
    w = None if weights is None else np.broadcast_to(np.asarray(weights, dtype=x.data.dtype), x.shape)
    terms = x.data if w is None else x.data * w
    out_data = np.full((1, 1, 1, 1), np.sum(terms, dtype=np.float64), dtype=x.data.dtype)

    def _backward(g: np.ndarray):
        scale = g.reshape(-1)[0]
        dx = np.full(x.shape, scale, dtype=x.data.dtype) if w is None else (w * scale).astype(x.data.dtype)
        return (dx,)

    return _emit("sum_all", tape, (x,), out_data, _backward)


# --- Reverse pass ----------------------------------------------------------

def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``.grad`` of every leaf tensor reachable from ``loss`` on ``tape``.

    Leaf gradients accumulate across calls; intermediate gradients live only for
    the duration of one call.
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a single-element loss, got shape {loss.shape}")
    end = next((i for i in range(len(tape.records) - 1, -1, -1) if tape.records[i].output is loss), None)
    if end is None:
        raise UsageError("loss tensor was not produced on this tape")

    pending: Dict[int, Tuple[Tensor, np.ndarray]] = {id(loss): (loss, np.ones_like(loss.data))}
    for rec in reversed(tape.records[:end + 1]):
        entry = pending.pop(id(rec.output), None)
        if entry is None:
            continue
        grads = rec.backward(entry[1])
        for inp, g in zip(rec.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in pending:
                pending[key] = (inp, pending[key][1] + g)
            else:
                pending[key] = (inp, g)

    # what remains was never produced by a record: parameters and other leaves
    for leaf, g in pending.values():
        leaf.accumulate_grad(g)
    logger.debug("backward replayed %d ops, %d leaves updated", end + 1, len(pending))


__all__ = [
    'DTYPE', 'Tensor', 'Tape', 'conv2d', 'max_pool2', 'upsample2', 'concat_channels',
    'relu', 'logistic', 'mse_loss', 'sum_all', 'backward',
]
