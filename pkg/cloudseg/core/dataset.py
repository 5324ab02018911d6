"""Dataset manifest loading, PNG decoding, resizing, label encoding and splitting."""
from __future__ import annotations
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from cloudseg.core.errors import DatasetError, ShapeError
from cloudseg.utils.constants import DEFAULT_LABEL_CODES, DEFAULT_RESOLUTION, TARGET_VALUES

logger = logging.getLogger(__name__)

MIN_IMAGE_SIDE = 8


class Label(IntEnum):
    SKY = 0
    THIN = 1
    THICK = 2


_TARGET_LUT = np.asarray(TARGET_VALUES, dtype=np.float32)


@dataclass(frozen=True)
class SkyImage:
    rgb: np.ndarray  # (h, w, 3) uint8
    path: Optional[str] = None

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ShapeError("sky image must have exactly 3 channels", self.rgb.shape)
        if self.rgb.shape[0] < MIN_IMAGE_SIDE or self.rgb.shape[1] < MIN_IMAGE_SIDE:
            raise ShapeError(f"sky image sides must be >= {MIN_IMAGE_SIDE}", self.rgb.shape)


@dataclass(frozen=True)
class LabelMask:
    labels: np.ndarray  # (h, w) uint8 holding Label values

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ShapeError("label mask must be 2-D", self.labels.shape)
        if self.labels.size and int(self.labels.max()) > Label.THICK:
            raise ShapeError("label mask holds values outside {Sky, Thin, Thick}", self.labels.shape)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    @classmethod
    def filled(cls, label: Label, shape: Tuple[int, int]) -> "LabelMask":
        return cls(np.full(shape, int(label), dtype=np.uint8))


@dataclass(frozen=True)
class Sample:
    id: str
    image: np.ndarray   # (3, r, r) float32 in [0, 1]
    target: np.ndarray  # (r, r) float32 in {0, 0.5, 1}
    gt: LabelMask
    source: Optional[str] = None


@dataclass(frozen=True)
class SplitSpec:
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    seed: int


# --- Encoding --------------------------------------------------------------

def encode_target(mask: LabelMask) -> np.ndarray:
    """Sky -> 0.0, Thin -> 0.5, Thick -> 1.0."""
    return _TARGET_LUT[mask.labels]


def decode_target(target: np.ndarray) -> LabelMask:
    """Inverse of encode_target for exact {0, 0.5, 1} arrays."""
    labels = np.zeros(target.shape, dtype=np.uint8)
    labels[target == 0.5] = Label.THIN
    labels[target == 1.0] = Label.THICK
    return LabelMask(labels)


def _code_table(codes: Optional[Mapping[str, int]]) -> Dict[int, Label]:
    codes = codes or DEFAULT_LABEL_CODES
    table = {int(codes["sky"]): Label.SKY, int(codes["thin"]): Label.THIN, int(codes["thick"]): Label.THICK}
    if len(table) != 3:
        raise DatasetError(f"label codes must be distinct, got {dict(codes)}")
    return table


def labels_from_codes(gray: np.ndarray, codes: Optional[Mapping[str, int]] = None,
                      path: Optional[str] = None) -> LabelMask:
    """Map an 8-bit code image onto labels; any pixel outside the code table is rejected."""
    table = _code_table(codes)
    lut = np.full(256, 255, dtype=np.uint8)
    for code, label in table.items():
        lut[code] = int(label)
    labels = lut[gray]
    bad = labels == 255
    if bad.any():
        value = int(gray[bad].flat[0])
        raise DatasetError(f"mask pixel outside code table {sorted(table)}", path=path, value=value)
    return LabelMask(labels)


def codes_from_labels(mask: LabelMask, codes: Optional[Mapping[str, int]] = None) -> np.ndarray:
    table = _code_table(codes)
    lut = np.zeros(3, dtype=np.uint8)
    for code, label in table.items():
        lut[int(label)] = code
    return lut[mask.labels]


# --- Decoding and resizing -------------------------------------------------

def read_image(path: str) -> SkyImage:
    """Decode an 8-bit RGB PNG; alpha is dropped with a warning."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "RGBA":
                logger.warning("Ignoring alpha channel in %s", path)
            if mode not in ("RGB", "RGBA", "L", "P"):
                raise DatasetError(f"unsupported image mode {mode}", path=path)
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise DatasetError("image file not found", path=path)
    except (UnidentifiedImageError, OSError) as e:
        raise DatasetError(f"cannot decode image: {e}", path=path)
    try:
        return SkyImage(rgb=rgb, path=path)
    except ShapeError as e:
        raise DatasetError(str(e), path=path)


def read_mask(path: str, codes: Optional[Mapping[str, int]] = None) -> Tuple[np.ndarray, LabelMask]:
    """Decode an 8-bit grayscale ground-truth PNG; returns the code image and its labels."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "L":
                if im.mode not in ("LA", "P", "RGB", "RGBA", "1"):
                    raise DatasetError(f"unsupported mask mode {im.mode}", path=path)
                logger.warning("Converting mask %s from mode %s to 8-bit grayscale", path, im.mode)
                im = im.convert("L")
            gray = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise DatasetError("mask file not found", path=path)
    except (UnidentifiedImageError, OSError) as e:
        raise DatasetError(f"cannot decode mask: {e}", path=path)
    return gray, labels_from_codes(gray, codes, path=path)


def resize_image(rgb: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize to size x size, returned as (3, size, size) float32 in [0, 1]."""
    if rgb.shape[:2] != (size, size):
        rgb = np.asarray(Image.fromarray(rgb).resize((size, size), Image.Resampling.BILINEAR), dtype=np.uint8)
    return (rgb.astype(np.float32) / 255.0).transpose(2, 0, 1).copy()


def resize_labels(mask: LabelMask, size: int) -> LabelMask:
    """Nearest-neighbour resize; labels are never averaged."""
    if mask.shape == (size, size):
        return mask
    im = Image.fromarray(mask.labels).resize((size, size), Image.Resampling.NEAREST)
    return LabelMask(np.asarray(im, dtype=np.uint8))


def make_sample(sample_id: str, image: SkyImage, gt: LabelMask, size: int = DEFAULT_RESOLUTION) -> Sample:
    if image.rgb.shape[:2] != gt.shape:
        raise DatasetError(f"image {image.rgb.shape[:2]} and mask {gt.shape} sizes differ", path=image.path)
    small = resize_labels(gt, size)
    return Sample(id=sample_id, image=resize_image(image.rgb, size), target=encode_target(small),
                  gt=small, source=image.path)


# --- Manifest --------------------------------------------------------------

def read_manifest(manifest_path: str) -> List[Tuple[str, str, str]]:
    """Parse ``image<TAB>mask<TAB>id`` rows; relative paths resolve against the manifest."""
    base = Path(manifest_path).resolve().parent
    rows: List[Tuple[str, str, str]] = []
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except FileNotFoundError:
        raise DatasetError("manifest not found", path=manifest_path)
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot read manifest: {e}", path=manifest_path)
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}",
                               path=manifest_path)
        image_path, mask_path, sample_id = (p.strip() for p in parts)
        if sample_id in seen:
            raise DatasetError(f"line {lineno}: duplicate id", path=manifest_path, value=sample_id)
        seen.add(sample_id)
        rows.append((str(base / image_path), str(base / mask_path), sample_id))
    return rows


def load_dataset(manifest_path: str, size: int = DEFAULT_RESOLUTION,
                 codes: Optional[Mapping[str, int]] = None, workers: int = 1) -> List[Sample]:
    """Load every manifest row as a Sample, in manifest order."""
    rows = read_manifest(manifest_path)

    def _load(row: Tuple[str, str, str]) -> Sample:
        image_path, mask_path, sample_id = row
        image = read_image(image_path)
        _, gt = read_mask(mask_path, codes)
        return make_sample(sample_id, image, gt, size)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_load, rows))
    else:
        samples = [_load(r) for r in rows]
    logger.info("Loaded %d samples from %s at %dx%d", len(samples), manifest_path, size, size)
    return samples


def write_dataset(samples: Sequence[Sample], out_dir: str,
                  codes: Optional[Mapping[str, int]] = None) -> str:
    """Write samples as PNG image/mask pairs plus a manifest; returns the manifest path."""
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    lines = ["# image\tmask\tid"]
    for s in samples:
        rgb = np.clip(np.rint(s.image.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
        image_rel = f"images/{s.id}.png"
        mask_rel = f"masks/{s.id}.png"
        Image.fromarray(rgb).save(root / image_rel)
        Image.fromarray(codes_from_labels(s.gt, codes)).save(root / mask_rel)
        lines.append(f"{image_rel}\t{mask_rel}\t{s.id}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %d samples to %s", len(samples), root)
    return str(manifest)


# --- Splitting -------------------------------------------------------------

def train_count(n: int, ratio: float = 0.8) -> int:
    """Half-up rounding of ratio*n, kept inside [1, n-1]."""
    return min(max(int(math.floor(ratio * n + 0.5)), 1), n - 1)


def random_split(ids: Sequence[str], ratio: float = 0.8, seed: int = 0) -> SplitSpec:
    """Seeded uniform permutation; the first train_count ids train, the rest test."""
    if len(ids) < 2:
        raise DatasetError(f"need at least 2 samples to split, got {len(ids)}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    k = train_count(len(ids), ratio)
    shuffled = [ids[i] for i in perm]
    return SplitSpec(train_ids=tuple(shuffled[:k]), test_ids=tuple(shuffled[k:]), seed=seed)


def select(samples: Sequence[Sample], ids: Sequence[str]) -> List[Sample]:
    by_id = {s.id: s for s in samples}
    return [by_id[i] for i in ids]


__all__ = [
    'Label', 'SkyImage', 'LabelMask', 'Sample', 'SplitSpec', 'encode_target', 'decode_target',
    'labels_from_codes', 'codes_from_labels', 'read_image', 'read_mask', 'resize_image',
    'resize_labels', 'make_sample', 'read_manifest', 'load_dataset', 'write_dataset',
    'train_count', 'random_split', 'select',
]
