"""Full-reference image quality metrics on [0, 1] arrays."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for unit-range images; +inf when identical."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    k = _gaussian_kernel()
    mu_x = convolve2d(x, k, mode="valid")
    mu_y = convolve2d(y, k, mode="valid")
    xx = convolve2d(x * x, k, mode="valid") - mu_x ** 2
    yy = convolve2d(y * y, k, mode="valid") - mu_y ** 2
    xy = convolve2d(x * y, k, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (xx + yy + SSIM_C2)
    return float(np.mean(num / den))


def _ssim_global_channel(x: np.ndarray, y: np.ndarray) -> float:
    mu_x, mu_y = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = ((x - mu_x) * (y - mu_y)).mean()
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(num / den)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over 11x11 Gaussian windows and channels.

    Images smaller than the window fall back to the global-statistics
    variant (one window covering the whole image).
    """
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise DimensionError(f"expected (C, H, W) or (H, W), got shape {a.shape}")
    use_global = min(a.shape[1], a.shape[2]) < SSIM_WINDOW
    fn = _ssim_global_channel if use_global else _ssim_channel
    return float(np.mean([fn(a[c], b[c]) for c in range(a.shape[0])]))
