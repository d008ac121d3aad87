"""Training data: PNG ingestion, bicubic LR synthesis, five-crop expansion,
and aligned random patch sampling with dihedral augmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image

from .metrics import bicubic_resize, quantize

logger = logging.getLogger(__name__)


def load_png(path) -> np.ndarray:
    """Read an image as float64 RGB in [0, 1], shape (3, H, W)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_png(path, image: np.ndarray) -> None:
    """Write a (3, H, W) or (1, 3, H, W) float image, clamped and rounded to 8 bits."""
    image = np.asarray(image)
    if image.ndim == 4:
        image = image[0]
    Image.fromarray(quantize(image).transpose(1, 2, 0), mode="RGB").save(path)


@dataclass
class Pair:
    lr: np.ndarray  # (3, h, w)
    hr: np.ndarray  # (3, s*h, s*w)
    name: str = ""


@dataclass
class Dataset:
    pairs: List[Pair]
    scale: int
    sources: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __post_init__(self):
        for p in self.pairs:
            lh, lw = p.lr.shape[-2:]
            if p.hr.shape[-2:] != (lh * self.scale, lw * self.scale):
                raise ValueError(f"pair {p.name!r}: HR {p.hr.shape} is not {self.scale}x LR {p.lr.shape}")


def crop_to_multiple(hr: np.ndarray, scale: int) -> np.ndarray:
    """Centre-crop the spatial axes to the largest multiples of ``scale``."""
    h, w = hr.shape[-2:]
    hh, ww = h - h % scale, w - w % scale
    top, left = (h - hh) // 2, (w - ww) // 2
    return hr[..., top : top + hh, left : left + ww]


def degrade(hr: np.ndarray, scale: int) -> np.ndarray:
    h, w = hr.shape[-2:]
    return bicubic_resize(hr, h // scale, w // scale)


def make_pair(hr: np.ndarray, scale: int, name: str = "") -> Pair:
    hr = np.ascontiguousarray(crop_to_multiple(hr, scale))
    return Pair(degrade(hr, scale), hr, name)


def ingest(hr_dir, scale: int, min_size: int = 1, lr_dir=None) -> Dataset:
    """Load every PNG in ``hr_dir``; LR images come from ``lr_dir`` (same file
    names) when given, otherwise from bicubic downscaling."""
    hr_dir = Path(hr_dir)
    if not hr_dir.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {hr_dir}")
    pairs = []
    for path in sorted(hr_dir.glob("*.png")):
        try:
            hr = load_png(path)
        except Exception as exc:  # noqa: BLE001 - any decode failure skips the file
            logger.warning("skipping unreadable image %s: %s", path, exc)
            continue
        if min(hr.shape[-2:]) < min_size:
            logger.warning("skipping %s: %s smaller than %d px", path, hr.shape[-2:], min_size)
            continue
        if lr_dir is None:
            pairs.append(make_pair(hr, scale, path.name))
            continue
        lr_path = Path(lr_dir) / path.name
        try:
            lr = load_png(lr_path)
        except Exception as exc:  # noqa: BLE001
            logger.warning("skipping %s: no readable LR counterpart (%s)", path, exc)
            continue
        hr = hr[:, : lr.shape[1] * scale, : lr.shape[2] * scale]
        if hr.shape[-2:] != (lr.shape[1] * scale, lr.shape[2] * scale):
            logger.warning("skipping %s: LR %s does not match HR at x%d", path, lr.shape, scale)
            continue
        pairs.append(Pair(lr, np.ascontiguousarray(hr), path.name))
    if not pairs:
        raise ValueError(f"no usable images in {hr_dir}")
    return Dataset(pairs, scale, [str(hr_dir)])


def five_crop_expand(dataset: Dataset, crop_fraction: float = 0.5, patch_size: int = 0) -> Dataset:
    """Replace each pair by its four corner crops and its centre crop.

    Crop sides are ``crop_fraction`` of the HR sides, rounded to multiples of
    the scale so LR and HR crops stay aligned.
    """
    if not 0 < crop_fraction <= 1:
        raise ValueError(f"crop_fraction must be in (0, 1], got {crop_fraction}")
    s = dataset.scale
    out = []
    for pair in dataset.pairs:
        h, w = pair.hr.shape[-2:]
        ch = max(s, int(round(crop_fraction * h / s)) * s)
        cw = max(s, int(round(crop_fraction * w / s)) * s)
        if min(ch, cw) < patch_size * s:
            raise ValueError(
                f"{pair.name}: crop {ch}x{cw} smaller than HR patch {patch_size * s}"
            )
        centre = (((h - ch) // s // 2) * s, ((w - cw) // s // 2) * s)
        origins = [(0, 0), (0, w - cw), (h - ch, 0), (h - ch, w - cw), centre]
        for tag, (top, left) in zip(("tl", "tr", "bl", "br", "c"), origins):
            hr = pair.hr[:, top : top + ch, left : left + cw]
            lr = pair.lr[:, top // s : (top + ch) // s, left // s : (left + cw) // s]
            out.append(Pair(np.ascontiguousarray(lr), np.ascontiguousarray(hr), f"{pair.name}#{tag}"))
    return Dataset(out, s, list(dataset.sources))


def apply_dihedral(x: np.ndarray, t: int) -> np.ndarray:
    """Element ``t`` (0..7) of the square's symmetry group on the last two axes:
    ``t % 4`` quarter turns, followed by a horizontal flip when ``t >= 4``."""
    y = np.rot90(x, t % 4, axes=(-2, -1))
    if t >= 4:
        y = y[..., ::-1]
    return y


def invert_dihedral(x: np.ndarray, t: int) -> np.ndarray:
    if t >= 4:
        x = x[..., ::-1]
    return np.rot90(x, -(t % 4), axes=(-2, -1))


def sample_batch(dataset: Dataset, spec, rng: np.random.Generator,
                 dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
    """Draw ``spec.batch`` aligned (LR, HR) patches of LR side ``spec.patch_size``."""
    if not dataset.pairs:
        raise ValueError("empty dataset")
    s, p, b = dataset.scale, spec.patch_size, spec.batch
    lr_batch = np.empty((b, 3, p, p), dtype=dtype)
    hr_batch = np.empty((b, 3, s * p, s * p), dtype=dtype)
    for i in range(b):
        pair = dataset.pairs[int(rng.integers(len(dataset.pairs)))]
        h, w = pair.lr.shape[-2:]
        if h < p or w < p:
            raise ValueError(f"{pair.name}: LR {h}x{w} smaller than patch {p}")
        y = int(rng.integers(h - p + 1))
        x = int(rng.integers(w - p + 1))
        t = int(rng.integers(8))
        lr = pair.lr[:, y : y + p, x : x + p]
        hr = pair.hr[:, s * y : s * (y + p), s * x : s * (x + p)]
        lr_batch[i] = apply_dihedral(lr, t)
        hr_batch[i] = apply_dihedral(hr, t)
    return lr_batch, hr_batch


def split(dataset: Dataset, n_holdout: int) -> Tuple[Dataset, Dataset]:
    """First ``len - n_holdout`` pairs for training, the rest held out."""
    k = len(dataset) - n_holdout
    if k < 1 or n_holdout < 0:
        raise ValueError(f"cannot hold out {n_holdout} of {len(dataset)} pairs")
    return (Dataset(dataset.pairs[:k], dataset.scale, dataset.sources),
            Dataset(dataset.pairs[k:], dataset.scale, dataset.sources))

