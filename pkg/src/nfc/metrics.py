"""PSNR and SSIM for unit-range images."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 100.0

WINDOW = 11
WINDOW_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


class MetricReport(NamedTuple):
    psnr: float
    ssim: float
    pixels: int


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, mask: Optional[np.ndarray] = None) -> float:
    """-10 log10(MSE) over all (masked) pixels and channels, capped at 100 dB."""
    a, b = _same_shape(a, b)
    d = (a - b) ** 2
    if mask is not None:
        d = d[np.asarray(mask, dtype=bool)]
    mse = float(d.mean())
    if mse <= 10 ** (-PSNR_CAP / 10):
        return PSNR_CAP
    return -10.0 * np.log10(mse)


def _gaussian_window() -> np.ndarray:
    x = np.arange(WINDOW) - WINDOW // 2
    g = np.exp(-(x**2) / (2 * WINDOW_SIGMA**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray) -> np.ndarray:
    g = _gaussian_window()
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    r = WINDOW // 2
    return out[r:-r, r:-r]


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM on the valid region, shape (H-10, W-10, C)."""
    a, b = _same_shape(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < WINDOW:
        raise ValueError(f"image smaller than the {WINDOW}x{WINDOW} SSIM window")
    maps = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mx, my = _filter_valid(x), _filter_valid(y)
        sxx = _filter_valid(x * x) - mx * mx
        syy = _filter_valid(y * y) - my * my
        sxy = _filter_valid(x * y) - mx * my
        num = (2 * mx * my + C1) * (2 * sxy + C2)
        den = (mx * mx + my * my + C1) * (sxx + syy + C2)
        maps.append(num / den)
    return np.stack(maps, axis=-1)


def ssim(a, b, mask: Optional[np.ndarray] = None) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5); ``mask`` selects window centers."""
    m = ssim_map(a, b)
    if mask is not None:
        r = WINDOW // 2
        sel = np.asarray(mask, dtype=bool)[r:-r, r:-r]
        if not sel.any():
            return float("nan")
        return float(m[sel].mean())
    return float(m.mean())


def report(a, b, mask: Optional[np.ndarray] = None) -> MetricReport:
    n = int(np.asarray(a).shape[0] * np.asarray(a).shape[1]) if mask is None else int(np.count_nonzero(mask))
    return MetricReport(psnr(a, b, mask), ssim(a, b, mask), n)
