"""Finite-difference gradient checking.

Checks run in float64: the input is promoted and numpy promotes everything
downstream of it, so the central difference is not swamped by float32 noise.
"""
from __future__ import annotations
from typing import Callable, Iterable, Optional

import numpy as np

from cloudseg.core.errors import UsageError
from cloudseg.core.tensor import Tape, Tensor, backward

ScalarFn = Callable[[Tensor, Optional[Tape]], Tensor]


def grad_errors(f: ScalarFn, x: Tensor, h: float = 1e-3,
                coords: Optional[Iterable[int]] = None) -> np.ndarray:
    """Per-coordinate relative error between the tape gradient and central differences.

    ``f(x, tape)`` must return a single-element tensor. ``coords`` restricts the
    check to flat indices of ``x``.
    """
    point = Tensor(x.data, requires_grad=True, dtype=np.float64)
    tape = Tape()
    out = f(point, tape)
    if out.size != 1:
        raise UsageError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    if out.requires_grad:
        backward(out, tape)
    analytic = point.grad.reshape(-1) if point.grad is not None else np.zeros(point.size)

    flat = point.data.reshape(-1)
    idx = np.arange(flat.size) if coords is None else np.asarray(list(coords), dtype=np.int64)
    errors = np.empty(idx.size, dtype=np.float64)
    for k, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(point, None).item()
        flat[i] = orig - h
        f_minus = f(point, None).item()
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[i])
        errors[k] = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
    return errors


def grad_check(f: ScalarFn, x: Tensor, h: float = 1e-3,
               coords: Optional[Iterable[int]] = None) -> float:
    """Max relative error of the analytic gradient of ``f`` at ``x``."""
    errors = grad_errors(f, x, h, coords)
    return float(errors.max()) if errors.size else 0.0


__all__ = ['grad_errors', 'grad_check']
