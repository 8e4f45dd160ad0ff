"""Spectral projection, blur/decimation and colour matching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import HsiCube, RgbImage

DEFAULT_PEAKS_NM = (620.0, 550.0, 460.0)  # R, G, B
DEFAULT_HALF_WIDTH_NM = 80.0


@dataclass
class Srf:
    """``matrix`` is ``[3, B]``, non-negative, each row summing to one."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != 3:
            raise ValueError(f"SRF must be 3 x B, got {m.shape}")
        if np.any(m < 0):
            raise ValueError("SRF entries must be non-negative")
        sums = m.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise ValueError("every SRF row needs positive mass")
        self.matrix = m / sums

    @property
    def bands(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def default(cls, bands: int, lo_nm: float = 400.0, hi_nm: float = 700.0) -> "Srf":
        """Triangular responses peaked at 620/550/460 nm sampled on ``bands`` wavelengths."""
        wl = np.linspace(lo_nm, hi_nm, bands)
        rows = [np.maximum(0.0, 1.0 - np.abs(wl - p) / DEFAULT_HALF_WIDTH_NM) for p in DEFAULT_PEAKS_NM]
        m = np.stack(rows)
        # a very coarse band grid can miss a peak entirely; fall back to the nearest band
        for r, p in enumerate(DEFAULT_PEAKS_NM):
            if m[r].sum() == 0:
                m[r, np.argmin(np.abs(wl - p))] = 1.0
        return cls(m)

    @classmethod
    def from_csv(cls, path) -> "Srf":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))


def srf_project(cube: HsiCube, srf: Srf) -> RgbImage:
    """Per-pixel ``rgb = srf @ spectrum``, accumulated band by band, clamped to [0, 1]."""
    if srf.bands != cube.bands:
        raise ValueError(f"SRF has {srf.bands} columns but cube has {cube.bands} bands")
    return RgbImage(np.clip(project_array(cube.data, srf.matrix), 0.0, 1.0))


def project_array(data: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Unclamped float64 projection of ``[B, H, W]`` through a ``[3, B]`` matrix."""
    data = np.asarray(data, dtype=np.float64)
    acc = np.zeros((3,) + data.shape[1:])
    for b in range(data.shape[0]):
        acc += matrix[:, b, None, None] * data[b]
    return acc


def gaussian_kernel_1d(size: int = 8, sigma: float = 3.0) -> np.ndarray:
    """Normalised 1D Gaussian centred on the middle of a ``size``-tap window."""
    if size < 1:
        raise ValueError("kernel size must be >= 1")
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def gaussian_kernel(size: int = 8, sigma: float = 3.0) -> np.ndarray:
    g = gaussian_kernel_1d(size, sigma)
    k = np.outer(g, g)
    return k / k.sum()


def _filter_axis(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    size = len(taps)
    before = (size - 1) // 2  # even windows anchor one tap left of centre
    after = size - 1 - before
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (before, after)
    padded = np.pad(arr, pad, mode="reflect")
    n = arr.shape[axis]
    out = np.zeros_like(arr)
    for i, t in enumerate(taps):
        out += t * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def blur_array(data: np.ndarray, size: int = 8, sigma: float = 3.0) -> np.ndarray:
    taps = gaussian_kernel_1d(size, sigma)
    out = _filter_axis(np.asarray(data, dtype=np.float64), taps, axis=-2)
    return _filter_axis(out, taps, axis=-1)


def gaussian_blur(cube: HsiCube, size: int = 8, sigma: float = 3.0) -> HsiCube:
    """Per-band separable Gaussian blur with reflect-padded borders."""
    return HsiCube(np.clip(blur_array(cube.data, size, sigma), 0.0, 1.0), cube.wavelengths)


def degrade(cube: HsiCube, scale: int, size: int = 8, sigma: float = 3.0) -> HsiCube:
    """Blur then keep every ``scale``-th pixel starting at (0, 0)."""
    if int(scale) != scale or scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    if cube.height % scale or cube.width % scale:
        raise ValueError(f"{cube.height}x{cube.width} is not divisible by scale {scale}")
    blurred = blur_array(cube.data, size, sigma)
    return HsiCube(np.clip(blurred[:, ::scale, ::scale], 0.0, 1.0), cube.wavelengths)


def _edge_cdf(channel: np.ndarray, bins: int):
    hist, edges = np.histogram(channel, bins=bins, range=(0.0, 1.0))
    cdf = np.concatenate([[0.0], np.cumsum(hist)]) / max(channel.size, 1)
    return edges, cdf


def histogram_match(src: RgbImage, ref: RgbImage, bins: int = 256) -> RgbImage:
    """Map each channel of ``src`` through its CDF and the inverse CDF of ``ref``.

    Both CDFs are piecewise linear between the edges of ``bins`` equal bins on
    [0, 1], so the mapping is monotone and continuous.
    """
    out = np.empty_like(src.data)
    for c in range(3):
        edges, cdf_src = _edge_cdf(src.data[c], bins)
        _, cdf_ref = _edge_cdf(ref.data[c], bins)
        u = np.interp(src.data[c], edges, cdf_src)
        out[c] = _inverse_cdf(u, edges, cdf_ref)
    return RgbImage(np.clip(out, 0.0, 1.0))


def _inverse_cdf(u, edges, cdf):
    # cdf is non-decreasing; np.interp resolves plateaus to the interval that owns the mass
    return np.interp(u, cdf, edges)


def histogram_emd(a: np.ndarray, b: np.ndarray, bins: int = 256) -> float:
    """1D earth mover's distance between two value sets, in units of bins."""
    _, ca = _edge_cdf(np.asarray(a).ravel(), bins)
    _, cb = _edge_cdf(np.asarray(b).ravel(), bins)
    return float(np.abs(ca - cb).sum())
