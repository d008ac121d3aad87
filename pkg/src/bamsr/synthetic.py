"""Procedural texture-rich RGB images for desk-scale training and tests.

Images are flat-coloured layers of sharp-edged discs, boxes, striped and
checkered regions. Edges and repeated patterns at scales above the LR
Nyquist limit are where a learned upscaler can beat bicubic interpolation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _region(rng, yy, xx, size):
    cy, cx = rng.uniform(0, size, 2)
    r = rng.uniform(size / 12, size / 3)
    kind = rng.integers(3)
    if kind == 0:
        return (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
    theta = rng.uniform(0, np.pi)
    u = np.cos(theta) * (xx - cx) + np.sin(theta) * (yy - cy)
    v = -np.sin(theta) * (xx - cx) + np.cos(theta) * (yy - cy)
    if kind == 1:
        return (np.abs(u) < r) & (np.abs(v) < r * rng.uniform(0.2, 1.0))
    return np.abs(u) < r * rng.uniform(0.1, 0.3)  # long bar


def _pattern(rng, yy, xx):
    if rng.random() < 0.5:
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(8.0, 20.0)
        u = np.cos(theta) * xx + np.sin(theta) * yy
        return np.sin(2 * np.pi * u / period + rng.uniform(0, 2 * np.pi)) > 0
    cell = int(rng.integers(6, 14))
    return ((yy.astype(int) // cell) + (xx.astype(int) // cell)) % 2 == 0


def texture_image(rng: np.random.Generator, size: int = 128) -> np.ndarray:
    """A (3, size, size) image in [0, 1] on the 8-bit grid."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.empty((3, size, size))
    img[:] = rng.uniform(0, 1, 3)[:, None, None]
    for _ in range(int(rng.integers(12, 24))):
        mask = _region(rng, yy, xx, size)
        if rng.random() < 0.4:
            mask = mask & _pattern(rng, yy, xx)
        colour = rng.uniform(0, 1, 3)
        img[:, mask] = colour[:, None]
    return np.round(img * 255.0) / 255.0


def write_texture_set(directory, count: int, size: int = 128, seed: int = 0) -> list:
    """Write ``count`` PNG textures into ``directory``; returns the paths."""
    from .data import save_png

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        p = directory / f"texture_{i:03d}.png"
        save_png(p, texture_image(rng, size))
        paths.append(p)
    return paths
