"""Procedural sky/cloud scenes with exactly consistent ground truth.

Each scene is a vertical blue gradient with at least one thin (gray, low
opacity) and one thick (white, high opacity) elliptical cloud. Thin clouds sit
in one half of the frame and thick clouds in the other so every scene holds
all three labels. A pixel's label comes from the most opaque cloud covering
it: none -> Sky, opacity < 0.5 -> Thin, otherwise Thick.
"""
from __future__ import annotations
import logging
from typing import List, Tuple

import numpy as np

from cloudseg.core.dataset import Label, LabelMask, Sample, SkyImage, make_sample
from cloudseg.core.errors import ConfigError
from cloudseg.utils.constants import DEFAULT_RESOLUTION

logger = logging.getLogger(__name__)

THIN_ALPHA = (0.30, 0.45)
THICK_ALPHA = (0.75, 0.95)
THIN_GRAY = 0.80
THICK_WHITE = 0.97
NOISE = 0.015


def _sky(rng: np.random.Generator, size: int) -> np.ndarray:
    top = np.array([0.22, 0.42, 0.85]) + rng.uniform(-0.03, 0.03, 3)
    horizon = np.array([0.42, 0.62, 0.95]) + rng.uniform(-0.03, 0.03, 3)
    t = np.linspace(0.0, 1.0, size)[:, None, None]
    return np.broadcast_to((1 - t) * top + t * horizon, (size, size, 3)).copy()


def _ellipse(rng: np.random.Generator, size: int, cols: Tuple[float, float]) -> np.ndarray:
    """Boolean footprint of one ellipse centred inside the given column band (fractions of size)."""
    yy, xx = np.mgrid[0:size, 0:size]
    cx = rng.uniform(cols[0], cols[1]) * size
    cy = rng.uniform(0.3, 0.7) * size
    rx = rng.uniform(0.14, 0.22) * size
    ry = rng.uniform(0.14, 0.22) * size
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def synth_scene(rng: np.random.Generator, size: int = DEFAULT_RESOLUTION) -> Tuple[SkyImage, LabelMask]:
    """One scene as 8-bit RGB plus its label mask."""
    sky = _sky(rng, size)
    alpha = np.zeros((size, size))
    color = np.zeros((size, size))
    thin_left = rng.random() < 0.5
    thin_band = (0.2, 0.35) if thin_left else (0.65, 0.8)
    thick_band = (0.65, 0.8) if thin_left else (0.2, 0.35)
    for band, (lo, hi), tone, count in ((thin_band, THIN_ALPHA, THIN_GRAY, 1 + rng.integers(0, 2)),
                                         (thick_band, THICK_ALPHA, THICK_WHITE, 1 + rng.integers(0, 2))):
        for _ in range(int(count)):
            a = rng.uniform(lo, hi)
            footprint = _ellipse(rng, size, band) & (alpha < a)
            alpha[footprint] = a
            color[footprint] = tone

    labels = np.full((size, size), int(Label.SKY), dtype=np.uint8)
    labels[(alpha > 0) & (alpha < 0.5)] = Label.THIN
    labels[alpha >= 0.5] = Label.THICK

    rgb = (1 - alpha)[..., None] * sky + (alpha * color)[..., None]
    rgb += rng.normal(0.0, NOISE, rgb.shape)
    rgb8 = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    return SkyImage(rgb=rgb8), LabelMask(labels)


def synth_fixture(count: int, seed: int = 0, size: int = DEFAULT_RESOLUTION) -> List[Sample]:
    """``count`` deterministic synthetic samples with ids synth-000, synth-001, ..."""
    if count < 1:
        raise ConfigError(f"count must be >= 1 (got {count})")
    samples = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        image, gt = synth_scene(rng, size)
        samples.append(make_sample(f"synth-{i:03d}", image, gt, size))
    logger.debug("Generated %d synthetic samples (seed=%d, size=%d)", count, seed, size)
    return samples


__all__ = ['synth_scene', 'synth_fixture']
