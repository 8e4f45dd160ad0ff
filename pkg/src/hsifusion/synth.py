"""Synthetic hyperspectral scenes with a second, misaligned view and its true flow.

The second view is rendered so that warping it with ``gt_flow`` (backward
warp, ``ref(p + gt_flow(p))``) reproduces the ground-truth cube.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .degrade import blur_array
from .io import FlowField, HsiCube, read_cube, read_flow, write_cube, write_flow

MAX_DISP_LIMIT = 10.0


@dataclass
class ScenePair:
    hr_cube: HsiCube
    ref_cube: HsiCube
    gt_flow: FlowField
    seed: int

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_cube(self.hr_cube, d / "hr.hsic")
        write_cube(self.ref_cube, d / "ref.hsic")
        write_flow(self.gt_flow, d / "gt.flow")

    @classmethod
    def load(cls, directory, seed: int = -1) -> "ScenePair":
        d = Path(directory)
        return cls(read_cube(d / "hr.hsic"), read_cube(d / "ref.hsic"), read_flow(d / "gt.flow"), seed)


def random_spectrum(rng, wl: np.ndarray) -> np.ndarray:
    """Smooth positive spectrum: a floor plus two or three Gaussian bumps."""
    s = np.full_like(wl, rng.uniform(0.03, 0.25))
    for _ in range(rng.integers(2, 4)):
        centre = rng.uniform(380, 720)
        width = rng.uniform(30, 120)
        s += rng.uniform(0.05, 0.4) * np.exp(-0.5 * ((wl - centre) / width) ** 2)
    return np.clip(s, 0.0, 0.95)


def _polygon_mask(verts: np.ndarray, h: int, w: int) -> np.ndarray:
    """Even-odd rule rasterisation evaluated at pixel centres."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    inside = np.zeros((h, w), dtype=bool)
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        crosses = (y0 > yy) != (y1 > yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (yy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xx < xint)
    return inside


def render_scene(rng, bands: int, h: int, w: int, n_shapes: int | None = None) -> np.ndarray:
    """Piecewise-smooth cube: random polygons with random spectra plus texture."""
    wl = np.linspace(400.0, 700.0, bands)
    cube = np.broadcast_to(random_spectrum(rng, wl)[:, None, None], (bands, h, w)).copy()
    n_shapes = n_shapes if n_shapes is not None else int(rng.integers(18, 30))
    for _ in range(n_shapes):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        radius = rng.uniform(0.06, 0.25) * min(h, w)
        k = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0, 2 * np.pi, k))
        radii = radius * rng.uniform(0.5, 1.0, k)
        verts = np.stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1)
        mask = _polygon_mask(verts, h, w)
        cube[:, mask] = random_spectrum(rng, wl)[:, None]
    # texture whose strength varies smoothly across the spectrum
    noise = blur_array(rng.normal(size=(1, h, w)), size=7, sigma=1.5)[0]
    noise /= max(np.abs(noise).max(), 1e-12)
    band_gain = 0.08 + 0.06 * np.sin(np.linspace(0, np.pi, bands) + rng.uniform(0, np.pi))
    cube *= 1.0 + band_gain[:, None, None] * noise[None]
    return np.clip(cube, 0.0, 1.0)


class _Deformation:
    """Displacement ``g(p) = (A - I)(p - c) + t + sum_k a_k sin(w_k . p + phi_k)``."""

    def __init__(self, rng, h: int, w: int, nonrigid: bool):
        angle = np.deg2rad(rng.uniform(-2, 2))
        scale = 1.0 + rng.uniform(-0.02, 0.02)
        shear = rng.uniform(-0.01, 0.01)
        self.lin = scale * np.array([[np.cos(angle), -np.sin(angle) + shear],
                                     [np.sin(angle), np.cos(angle)]]) - np.eye(2)
        self.centre = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        self.shift = rng.uniform(-1, 1, 2)
        n_waves = 3 if nonrigid else 0
        period = rng.uniform(0.6, 1.5, n_waves) * max(h, w)
        direction = rng.uniform(0, 2 * np.pi, n_waves)
        self.freq = (2 * np.pi / period)[:, None] * np.stack([np.cos(direction), np.sin(direction)], 1)
        self.phase = rng.uniform(0, 2 * np.pi, (n_waves, 2))
        self.amp = rng.uniform(-1, 1, (n_waves, 2))
        self.gain = 1.0

    def __call__(self, px: np.ndarray, py: np.ndarray):
        rx, ry = px - self.centre[0], py - self.centre[1]
        dx = self.lin[0, 0] * rx + self.lin[0, 1] * ry + self.shift[0]
        dy = self.lin[1, 0] * rx + self.lin[1, 1] * ry + self.shift[1]
        for k in range(len(self.freq)):
            arg = self.freq[k, 0] * px + self.freq[k, 1] * py
            dx = dx + self.amp[k, 0] * np.sin(arg + self.phase[k, 0])
            dy = dy + self.amp[k, 1] * np.sin(arg + self.phase[k, 1])
        return self.gain * dx, self.gain * dy


def _bilinear_sample(cube: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    _, h, w = cube.shape
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.minimum(np.floor(sx), max(w - 2, 0)).astype(int)
    y0 = np.minimum(np.floor(sy), max(h - 2, 0)).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax, ay = sx - x0, sy - y0
    return ((1 - ay) * ((1 - ax) * cube[:, y0, x0] + ax * cube[:, y0, x1])
            + ay * ((1 - ax) * cube[:, y1, x0] + ax * cube[:, y1, x1]))


def synth_scene(seed: int, bands: int = 8, height: int = 128, width: int = 128,
                max_disp: float = 6.0, nonrigid: bool = True) -> ScenePair:
    """Generate a ground-truth cube and a second view displaced by at most ``max_disp`` px.

    ``nonrigid=False`` restricts the misalignment to a global affine map.
    """
    if height < 32 or width < 32:
        raise ValueError("scenes need H, W >= 32")
    if not 0 <= max_disp <= MAX_DISP_LIMIT:
        raise ValueError(f"max_disp must lie in [0, {MAX_DISP_LIMIT}]")
    rng = np.random.default_rng(seed)
    hr = render_scene(rng, bands, height, width)
    deform = _Deformation(rng, height, width, nonrigid)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = deform(xx, yy)
    peak = float(np.sqrt(dx * dx + dy * dy).max())
    target = max_disp * rng.uniform(0.6, 1.0)
    deform.gain = target / peak if peak > 0 and max_disp > 0 else 0.0
    dx, dy = deform(xx, yy)

    # ref(q) = hr(M^-1 q) with M(p) = p + g(p); invert M by fixed-point iteration
    px, py = xx.copy(), yy.copy()
    for _ in range(60):
        gx, gy = deform(px, py)
        px, py = xx - gx, yy - gy
    ref = _bilinear_sample(hr, px, py) if deform.gain else hr.copy()

    wl = np.linspace(400.0, 700.0, bands)
    return ScenePair(
        hr_cube=HsiCube(hr, wl),
        ref_cube=HsiCube(np.clip(ref, 0.0, 1.0), wl),
        gt_flow=FlowField(np.stack([dx, dy])),
        seed=seed,
    )
