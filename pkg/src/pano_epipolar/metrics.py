"""PSNR and SSIM for multi-view consistency checks.

Images are float arrays in [0, 1], shaped (H, W) or (H, W, C).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 99.0
LUMA_601 = np.array([0.299, 0.587, 0.114])


class ShapeMismatch(ValueError):
    pass


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, cap: float = PSNR_CAP) -> float:
    """``10 log10(1 / MSE)``; identical images return ``cap``."""
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return cap
    return float(min(10.0 * np.log10(1.0 / mse), cap))


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim == 3:
        if img.shape[2] < 3:
            raise ShapeMismatch(f"cannot convert {img.shape[2]} channels to luma")
        return img[:, :, :3] @ LUMA_601
    return img


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = correlate1d(correlate1d(img, taps, axis=0, mode="constant"), taps, axis=1, mode="constant")
    r = len(taps) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_map(a, b, win: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03,
             data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every window fully inside the image (gray inputs)."""
    a, b = _pair(to_gray(a), to_gray(b))
    if min(a.shape) < win:
        raise ShapeMismatch(f"images smaller than the {win}x{win} SSIM window")
    taps = gaussian_window(win, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    saa = _filter_valid(a * a, taps) - mu_a ** 2
    sbb = _filter_valid(b * b, taps) - mu_b ** 2
    sab = _filter_valid(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    return num / den


def ssim(a, b, **kw) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, range 1)."""
    return float(np.mean(ssim_map(a, b, **kw)))


def first_last_consistency(frames, poses, tol: float = 1e-9):
    """PSNR/SSIM between the first and last frame of a loop that returns to its start pose."""
    if len(frames) < 2 or len(frames) != len(poses):
        raise ValueError("need at least two frames with one pose each")
    if not np.allclose(poses[0].matrix(), poses[-1].matrix(), atol=tol, rtol=0):
        raise ValueError("first and last poses differ; consistency needs a closed loop")
    return psnr(frames[0], frames[-1]), ssim(frames[0], frames[-1])
