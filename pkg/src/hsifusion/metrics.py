"""Band-wise PSNR / SSIM and per-pixel spectral angle."""
from __future__ import annotations

import numpy as np

from .io import HsiCube

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _arrays(a, b):
    a = a.data if isinstance(a, HsiCube) else a
    b = b.data if isinstance(b, HsiCube) else b
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 3:
        raise ValueError(f"metric inputs must be equal [B,H,W] cubes, got {a.shape} and {b.shape}")
    return a, b


def psnr_per_band(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _arrays(a, b)
    mse = np.mean((a - b) ** 2, axis=(1, 2))
    out = np.full(mse.shape, PSNR_CAP_DB)
    ok = mse >= 1e-10
    out[ok] = 10.0 * np.log10(data_range ** 2 / mse[ok])
    return np.minimum(out, PSNR_CAP_DB)


def psnr(a, b, data_range: float = 1.0) -> float:
    """Mean over bands of ``10 log10(1 / MSE)``; bands with MSE < 1e-10 score 100 dB."""
    return float(np.mean(psnr_per_band(a, b, data_range)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return g


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of the last two axes."""
    n = len(g)
    h, w = img.shape[-2:]
    rows = sum(g[i] * img[..., i:i + h - n + 1, :] for i in range(n))
    return sum(g[j] * rows[..., :, j:j + w - n + 1] for j in range(n))


def ssim_per_band(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _arrays(a, b)
    if min(a.shape[1:]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs H, W >= {SSIM_WINDOW}, got {a.shape[1:]}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return smap.mean(axis=(1, 2))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Gaussian-window (11x11, sigma 1.5) SSIM over valid windows, averaged over bands."""
    return float(np.mean(ssim_per_band(a, b, data_range)))


def sam_map(a, b) -> np.ndarray:
    a, b = _arrays(a, b)
    dot = np.sum(a * b, axis=0)
    norm = np.sqrt(np.sum(a * a, axis=0)) * np.sqrt(np.sum(b * b, axis=0))
    angle = np.zeros_like(dot)
    ok = norm > 0
    angle[ok] = np.arccos(np.clip(dot[ok] / norm[ok], -1.0, 1.0))
    return angle


def sam(a, b) -> float:
    """Mean spectral angle in radians; pixels with a zero spectrum count as angle 0."""
    return float(np.mean(sam_map(a, b)))


def all_metrics(pred, target) -> dict:
    return {"psnr": psnr(pred, target), "ssim": ssim(pred, target), "sam": sam(pred, target)}
