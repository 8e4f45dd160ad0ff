"""Resampling ops: flow warping, bilinear resize, average pooling."""
from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor, make_node


def _axis_coords(raw: np.ndarray, n: int):
    """Clamped sample coordinate -> (lower index, upper index, fraction, inside mask)."""
    s = np.clip(raw, 0, n - 1)
    lo = np.minimum(np.floor(s), max(n - 2, 0)).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = (s - lo).astype(raw.dtype)
    inside = (raw > 0) & (raw < n - 1)
    return lo, hi, frac, inside


def warp_bilinear(x: Tensor, flow: Tensor) -> Tensor:
    """Backward warp: ``out[:, y, x] = x[:, y + dy, x + dx]`` sampled bilinearly.

    ``flow`` is ``[2, H, W]`` holding (dx, dy) in pixels.  Sample positions
    outside the image are clamped to the border.
    """
    if x.ndim != 3 or flow.ndim != 3 or flow.shape[0] != 2 or flow.shape[1:] != x.shape[1:]:
        raise ContractError(f"warp_bilinear: image {x.shape} incompatible with flow {flow.shape}")
    c, h, w = x.shape
    dt = x.dtype
    yy, xx = np.meshgrid(np.arange(h, dtype=dt), np.arange(w, dtype=dt), indexing="ij")
    fd = flow.data.astype(dt, copy=False)
    x0, x1, ax, in_x = _axis_coords(xx + fd[0], w)
    y0, y1, ay, in_y = _axis_coords(yy + fd[1], h)
    img = x.data
    v00 = img[:, y0, x0]
    v01 = img[:, y0, x1]
    v10 = img[:, y1, x0]
    v11 = img[:, y1, x1]
    bx = 1 - ax
    by = 1 - ay
    w00, w01, w10, w11 = by * bx, by * ax, ay * bx, ay * ax
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11

    def backward(g):
        gx = gflow = None
        if x.requires_grad:
            base = (np.arange(c) * (h * w))[:, None, None]
            idx = np.concatenate([
                (base + y0 * w + x0).ravel(), (base + y0 * w + x1).ravel(),
                (base + y1 * w + x0).ravel(), (base + y1 * w + x1).ravel(),
            ])
            wts = np.concatenate([
                (g * w00).ravel(), (g * w01).ravel(), (g * w10).ravel(), (g * w11).ravel(),
            ])
            gx = np.bincount(idx, weights=wts, minlength=c * h * w).reshape(c, h, w).astype(dt)
        if flow.requires_grad:
            d_sx = by * (v01 - v00) + ay * (v11 - v10)
            d_sy = bx * (v10 - v00) + ax * (v11 - v01)
            gflow = np.stack([
                (g * d_sx).sum(axis=0) * in_x,
                (g * d_sy).sum(axis=0) * in_y,
            ]).astype(flow.dtype)
        return gx, gflow

    return make_node(out, (x, flow), backward)


def linear_resize_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Row-stochastic ``[n_out, n_in]`` matrix for half-pixel linear interpolation."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.minimum(np.floor(src).astype(int), max(n_in - 2, 0))
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of the last two axes as two fixed matrix products."""
    h, w = x.shape[-2:]
    ry = linear_resize_matrix(h, out_h, x.dtype)
    rx = linear_resize_matrix(w, out_w, x.dtype)
    out = ry @ x.data @ rx.T

    def backward(g):
        return (ry.T @ g @ rx,)

    return make_node(out, (x,), backward)


def avg_pool2d(x: Tensor, factor: int = 2) -> Tensor:
    """Non-overlapping average pooling of the last two axes."""
    h, w = x.shape[-2:]
    if h % factor or w % factor:
        raise ContractError(f"avg_pool2d: {h}x{w} not divisible by {factor}")
    lead = x.shape[:-2]
    out = x.data.reshape(lead + (h // factor, factor, w // factor, factor)).mean(axis=(-3, -1))
    scale = 1.0 / (factor * factor)

    def backward(g):
        up = np.repeat(np.repeat(g, factor, axis=-2), factor, axis=-1)
        return (up * scale,)

    return make_node(out, (x,), backward)


def local_correlation(a: Tensor, b: Tensor, radius: int) -> Tensor:
    """Cost volume ``out[k, y, x] = mean_c a[c, y, x] * b[c, y + dy_k, x + dx_k]``.

    Displacements ``(dy, dx)`` range over ``[-radius, radius]^2`` in C order;
    ``b`` is zero outside the image.
    """
    if a.shape != b.shape or a.ndim != 3:
        raise ContractError(f"local_correlation: shapes {a.shape} and {b.shape} differ")
    if radius < 0:
        raise ContractError("local_correlation: radius must be >= 0")
    c, h, w = a.shape
    r = radius
    bp = np.pad(b.data, ((0, 0), (r, r), (r, r)))
    offsets = [(dy, dx) for dy in range(2 * r + 1) for dx in range(2 * r + 1)]
    out = np.empty((len(offsets), h, w), dtype=a.dtype)
    for k, (dy, dx) in enumerate(offsets):
        out[k] = np.einsum("chw,chw->hw", a.data, bp[:, dy:dy + h, dx:dx + w]) / c

    def backward(g):
        ga = np.zeros_like(a.data)
        gbp = np.zeros_like(bp)
        for k, (dy, dx) in enumerate(offsets):
            gk = g[k] / c
            ga += gk * bp[:, dy:dy + h, dx:dx + w]
            gbp[:, dy:dy + h, dx:dx + w] += gk * a.data
        return ga, gbp[:, r:r + h, r:r + w]

    return make_node(out, (a, b), backward)
