"""Colour renderings of probability masks and ternary maps, and PNG output."""
from __future__ import annotations
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from cloudseg.core.dataset import LabelMask
from cloudseg.core.errors import DatasetError
from cloudseg.core.unet import ProbabilityMask
from cloudseg.utils.constants import COOLWARM_STOPS, TERNARY_PALETTE

logger = logging.getLogger(__name__)

_STOPS = np.asarray(COOLWARM_STOPS, dtype=np.float64)
_PALETTE = np.asarray(TERNARY_PALETTE, dtype=np.uint8)


def render_prob(mask: ProbabilityMask) -> np.ndarray:
    """Three-stop diverging map: blue at 0, neutral gray at 0.5, red at 1; (h, w, 3) uint8."""
    p = np.clip(mask.values.astype(np.float64), 0.0, 1.0)[..., None]
    lower = _STOPS[0] + (_STOPS[1] - _STOPS[0]) * (p / 0.5)
    upper = _STOPS[1] + (_STOPS[2] - _STOPS[1]) * ((p - 0.5) / 0.5)
    rgb = np.where(p <= 0.5, lower, upper)
    # round half up
    return np.floor(rgb + 0.5).astype(np.uint8)


def render_ternary(mask: LabelMask) -> np.ndarray:
    """Sky black, Thin mid-gray, Thick white; same code values as the ground-truth PNGs."""
    return _PALETTE[mask.labels]


def save_rgb(rgb: np.ndarray, path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb).save(path)
    logger.debug("Wrote %s", path)


def save_mask16(mask: ProbabilityMask, path: str) -> None:
    """Raw probabilities as 16-bit grayscale, p * 65535 rounded."""
    raw = np.rint(np.clip(mask.values.astype(np.float64), 0.0, 1.0) * 65535.0).astype(np.uint16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(raw).save(path)
    logger.debug("Wrote %s", path)


def load_mask16(path: str) -> ProbabilityMask:
    """Read a mask written by save_mask16."""
    try:
        with Image.open(path) as im:
            im.load()
            raw = np.asarray(im)
    except FileNotFoundError:
        raise DatasetError("mask file not found", path=path)
    except OSError as e:
        raise DatasetError(f"cannot decode mask: {e}", path=path)
    if raw.ndim != 2:
        raise DatasetError(f"expected a single-channel 16-bit mask, got shape {raw.shape}", path=path)
    return ProbabilityMask((raw.astype(np.float64) / 65535.0).astype(np.float32))


__all__ = ['render_prob', 'render_ternary', 'save_rgb', 'save_mask16', 'load_mask16']
