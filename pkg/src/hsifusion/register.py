"""Coarse rigid registration: Harris corners, NCC matching, RANSAC affine fit."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .io import HsiCube, RgbImage


class NoModelError(RuntimeError):
    """RANSAC could not find a non-degenerate minimal sample."""


@dataclass
class Affine2D:
    """Maps source pixel coordinates (x, y) to target coordinates."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64).reshape(2, 3)

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix[:, :2]))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "Affine2D":
        if abs(self.det) < 1e-12:
            raise np.linalg.LinAlgError("affine map is singular")
        lin = np.linalg.inv(self.matrix[:, :2])
        return Affine2D(np.hstack([lin, -lin @ self.matrix[:, 2:]]))

    def to_csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in self.matrix.ravel())

    @classmethod
    def from_csv_row(cls, text: str) -> "Affine2D":
        values = [float(v) for v in text.strip().split(",")]
        if len(values) != 6:
            raise ValueError(f"expected 6 affine parameters, got {len(values)}")
        return cls(np.array(values))


@dataclass
class Correspondence:
    src: tuple
    dst: tuple
    score: float


def to_gray(img) -> np.ndarray:
    data = img.data if isinstance(img, (RgbImage, HsiCube)) else np.asarray(img)
    data = np.asarray(data, dtype=np.float64)
    return data.mean(axis=0) if data.ndim == 3 else data


def harris_response(gray: np.ndarray, k: float = 0.04, sigma: float = 1.5) -> np.ndarray:
    ix = ndimage.sobel(gray, axis=1, mode="nearest")
    iy = ndimage.sobel(gray, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, sigma)
    syy = ndimage.gaussian_filter(iy * iy, sigma)
    sxy = ndimage.gaussian_filter(ix * iy, sigma)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def detect_corners(img, max_n: int = 200, k: float = 0.04, nms_radius: int = 4,
                   rel_threshold: float = 0.01) -> np.ndarray:
    """Top ``max_n`` Harris maxima as an ``[n, 2]`` array of (x, y), strongest first."""
    r = harris_response(to_gray(img), k)
    peak = r.max()
    if peak <= 1e-12:
        return np.zeros((0, 2))
    local_max = r == ndimage.maximum_filter(r, size=2 * nms_radius + 1, mode="constant", cval=-np.inf)
    ys, xs = np.nonzero(local_max & (r > rel_threshold * peak))
    scores = r[ys, xs]
    # strongest first; ties broken by raster order for determinism
    order = np.lexsort((xs, ys, -scores))[:max_n]
    return np.stack([xs[order], ys[order]], axis=1).astype(np.float64)


def _patches(gray: np.ndarray, pts: np.ndarray, half: int):
    h, w = gray.shape
    keep, rows = [], []
    for i, (x, y) in enumerate(np.round(pts).astype(int)):
        if half <= x < w - half and half <= y < h - half:
            p = gray[y - half:y + half + 1, x - half:x + half + 1].ravel()
            p = p - p.mean()
            n = np.linalg.norm(p)
            if n > 1e-12:
                keep.append(i)
                rows.append(p / n)
    return np.array(keep, dtype=int), (np.array(rows) if rows else np.zeros((0, (2 * half + 1) ** 2)))


def match_features(a_pts, b_pts, img_a, img_b, window: int = 11, min_ncc: float = 0.8,
                   max_dist: float | None = None) -> list:
    """Mutual-best normalised cross-correlation matches from ``a`` to ``b``."""
    if window % 2 == 0:
        raise ValueError("window must be odd")
    a_pts = np.asarray(a_pts, dtype=np.float64).reshape(-1, 2)
    b_pts = np.asarray(b_pts, dtype=np.float64).reshape(-1, 2)
    half = window // 2
    ia, pa = _patches(to_gray(img_a), a_pts, half)
    ib, pb = _patches(to_gray(img_b), b_pts, half)
    if len(ia) == 0 or len(ib) == 0:
        return []
    ncc = pa @ pb.T
    if max_dist is not None:
        d = np.linalg.norm(a_pts[ia][:, None] - b_pts[ib][None], axis=2)
        ncc = np.where(d <= max_dist, ncc, -np.inf)
    best_b = np.argmax(ncc, axis=1)
    best_a = np.argmax(ncc, axis=0)
    out = []
    for i, j in enumerate(best_b):
        if best_a[j] == i and ncc[i, j] >= min_ncc:
            out.append(Correspondence(tuple(a_pts[ia[i]]), tuple(b_pts[ib[j]]), float(ncc[i, j])))
    return out


def fit_affine(src: np.ndarray, dst: np.ndarray) -> Affine2D:
    """Least-squares affine map with ``dst ~ A @ [src, 1]``."""
    design = np.hstack([src, np.ones((len(src), 1))])
    sol, *_ = np.linalg.lstsq(design, dst, rcond=None)
    return Affine2D(sol.T)


def _as_arrays(matches):
    if isinstance(matches, tuple) and len(matches) == 2:
        return np.asarray(matches[0], float), np.asarray(matches[1], float)
    src = np.array([m.src for m in matches], dtype=np.float64).reshape(-1, 2)
    dst = np.array([m.dst for m in matches], dtype=np.float64).reshape(-1, 2)
    return src, dst


def ransac_affine(matches, iters: int = 1000, tol_px: float = 2.0, seed: int = 0,
                  min_area: float = 1e-6):
    """Robust affine fit: best minimal model by inlier count, then a least-squares refit.

    ``matches`` is a list of ``Correspondence`` or a ``(src, dst)`` pair of
    ``[n, 2]`` arrays.  Returns ``(Affine2D, inlier_mask)``.
    """
    src, dst = _as_arrays(matches)
    n = len(src)
    if n < 3:
        raise NoModelError(f"need at least 3 matches, got {n}")
    rng = np.random.default_rng(seed)
    best_count, best_mask = 0, None
    for _ in range(iters):
        idx = rng.choice(n, 3, replace=False)
        p = src[idx]
        area = abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        if area < min_area:
            continue
        model = fit_affine(p, dst[idx])
        resid = np.linalg.norm(model.apply(src) - dst, axis=1)
        mask = resid < tol_px
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
    if best_mask is None:
        raise NoModelError("every sampled triple was degenerate (collinear)")
    return fit_affine(src[best_mask], dst[best_mask]), best_mask


def sample_bilinear(data: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Bilinear sampling of ``[C, H, W]`` at float coordinates with border clamping."""
    _, h, w = data.shape
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.minimum(np.floor(sx), max(w - 2, 0)).astype(int)
    y0 = np.minimum(np.floor(sy), max(h - 2, 0)).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax, ay = sx - x0, sy - y0
    return ((1 - ay) * (1 - ax) * data[:, y0, x0] + (1 - ay) * ax * data[:, y0, x1]
            + ay * (1 - ax) * data[:, y1, x0] + ay * ax * data[:, y1, x1])


def warp_affine(img, affine: Affine2D, out_shape=None):
    """Resample ``img`` into the target frame of ``affine`` (inverse mapping, bilinear)."""
    if abs(affine.det) < 1e-12:
        raise np.linalg.LinAlgError("cannot warp with a singular affine map")
    data = img.data if isinstance(img, (RgbImage, HsiCube)) else np.asarray(img)
    data = np.asarray(data, dtype=np.float64)
    h, w = out_shape if out_shape is not None else data.shape[1:]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    src = affine.inverse().apply(np.stack([xx.ravel(), yy.ravel()], axis=1))
    out = sample_bilinear(data, src[:, 0].reshape(h, w), src[:, 1].reshape(h, w))
    if isinstance(img, RgbImage):
        return RgbImage(np.clip(out, 0, 1))
    if isinstance(img, HsiCube):
        return HsiCube(np.clip(out, 0, 1), img.wavelengths)
    return out


def register_images(src_img, dst_img, max_corners: int = 300, window: int = 11,
                    iters: int = 1000, tol_px: float = 2.0, seed: int = 0,
                    max_dist: float | None = 32.0):
    """Estimate the affine map taking ``src_img`` coordinates onto ``dst_img``."""
    a = detect_corners(src_img, max_corners)
    b = detect_corners(dst_img, max_corners)
    matches = match_features(a, b, src_img, dst_img, window=window, max_dist=max_dist)
    return ransac_affine(matches, iters=iters, tol_px=tol_px, seed=seed)
