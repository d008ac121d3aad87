"""Evaluation protocol: bicubic degradation, RGB -> Y, PSNR and SSIM.

Images are float arrays in [0, 1] with channels before the spatial axes,
e.g. ``(3, H, W)`` or ``(1, 3, H, W)`` for RGB. Luminance images have a
single channel, and the metric functions accept any array that squeezes
to ``(H, W)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PSNR_CAP_DB = 100.0
CUBIC_A = -0.5

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def cubic_kernel(x, a: float = CUBIC_A):
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    inner = (a + 2) * x3 - (a + 3) * x2 + 1
    outer = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, inner, np.where(x < 2, outer, 0.0))


@lru_cache(maxsize=128)
def resize_matrix(n_in: int, n_out: int, antialias: bool = True) -> np.ndarray:
    """Dense ``(n_out, n_in)`` bicubic resampling matrix along one axis.

    Pixel centres are aligned (``u = (i + 0.5) / scale - 0.5``), the kernel is
    stretched by ``1/scale`` when shrinking, taps beyond the border are clamped
    to the edge pixel and each row is normalised to sum to one.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"sizes must be positive, got {n_in} -> {n_out}")
    scale = n_out / n_in
    stretch = scale < 1 and antialias
    width = 4.0 / scale if stretch else 4.0
    out = np.arange(n_out, dtype=np.float64)
    u = (out + 0.5) / scale - 0.5
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    w = scale * cubic_kernel(scale * dist) if stretch else cubic_kernel(dist)
    w = w / w.sum(axis=1, keepdims=True)
    clamped = np.clip(idx, 0, n_in - 1).astype(np.int64)
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.repeat(np.arange(n_out), taps)
    np.add.at(mat, (rows, clamped.reshape(-1)), w.reshape(-1))
    mat.setflags(write=False)
    return mat


def apply_separable(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.matmul(np.matmul(rows, arr), cols.T)


def bicubic_resize(image: np.ndarray, out_h: int, out_w: int, clamp: bool = True) -> np.ndarray:
    """Resize the last two axes of ``image`` with the antialiased bicubic kernel."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[-2:]
    out = apply_separable(image, resize_matrix(h, out_h), resize_matrix(w, out_w))
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def rgb_to_y(image: np.ndarray) -> np.ndarray:
    """BT.601 studio-swing luma of an RGB image in [0, 1]; output in [16/255, 235/255]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim < 3 or image.shape[-3] != 3:
        raise ValueError(f"expected an RGB image with 3 channels, got shape {image.shape}")
    r, g, b = image[..., 0:1, :, :], image[..., 1:2, :, :], image[..., 2:3, :, :]
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0


def _as_plane(image: np.ndarray) -> np.ndarray:
    plane = np.asarray(image, dtype=np.float64)
    while plane.ndim > 2 and plane.shape[0] == 1:
        plane = plane[0]
    if plane.ndim != 2:
        raise ValueError(f"expected a single-channel image, got shape {np.shape(image)}")
    return plane


def _prepare(reference, test, shave: int):
    a, b = _as_plane(reference), _as_plane(test)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if shave < 0 or 2 * shave >= min(a.shape):
        raise ValueError(f"shave {shave} invalid for image {a.shape}")
    if shave:
        a = a[shave:-shave, shave:-shave]
        b = b[shave:-shave, shave:-shave]
    return a, b


def psnr(reference: np.ndarray, test: np.ndarray, shave: int = 0) -> float:
    """PSNR in dB on the [0, 1] scale; identical images give ``PSNR_CAP_DB``."""
    a, b = _prepare(reference, test, shave)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


@lru_cache(maxsize=4)
def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian; the 2-D window is its outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g = g / g.sum()
    g.setflags(write=False)
    return g


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(reference: np.ndarray, test: np.ndarray, shave: int = 0) -> float:
    """Single-scale SSIM (11x11 Gaussian, sigma 1.5, K1=0.01, K2=0.03, range 1),
    averaged over window positions lying fully inside the image."""
    a, b = _prepare(reference, test, shave)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu1, mu2 = _filter_valid(a, g), _filter_valid(b, g)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s11 = _filter_valid(a * a, g) - mu1_sq
    s22 = _filter_valid(b * b, g) - mu2_sq
    s12 = _filter_valid(a * b, g) - mu12
    num = (2.0 * mu12 + c1) * (2.0 * s12 + c2)
    den = (mu1_sq + mu2_sq + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    border_shave: int

    def formatted(self) -> str:
        """``PSNR/SSIM`` as printed in SR result tables."""
        return f"{self.psnr_db:.2f}/{self.ssim:.4f}"


def evaluate_rgb(reference_rgb: np.ndarray, test_rgb: np.ndarray, shave: int) -> MetricReport:
    """Y-channel PSNR and SSIM of two RGB images after shaving ``shave`` pixels."""
    ya, yb = rgb_to_y(reference_rgb), rgb_to_y(test_rgb)
    return MetricReport(psnr(ya, yb, shave), ssim(ya, yb, shave), shave)


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and round to the 8-bit grid, halves away from zero."""
    x = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(x + 0.5).astype(np.uint8)
