"""Optical-flow colour coding with the standard Middlebury colour wheel."""
from __future__ import annotations

import numpy as np

from .io import FlowField, RgbImage

# hue segment lengths: red-yellow, yellow-green, green-cyan, cyan-blue, blue-magenta, magenta-red
_SEGMENTS = (15, 6, 4, 11, 13, 6)


def color_wheel() -> np.ndarray:
    """``[55, 3]`` RGB wheel in [0, 1]."""
    ry, yg, gc, cb, bm, mr = _SEGMENTS
    rows = []
    ramp = lambda n: np.arange(n) / n  # noqa: E731
    rows.append(np.stack([np.ones(ry), ramp(ry), np.zeros(ry)], 1))
    rows.append(np.stack([1 - ramp(yg), np.ones(yg), np.zeros(yg)], 1))
    rows.append(np.stack([np.zeros(gc), np.ones(gc), ramp(gc)], 1))
    rows.append(np.stack([np.zeros(cb), 1 - ramp(cb), np.ones(cb)], 1))
    rows.append(np.stack([ramp(bm), np.zeros(bm), np.ones(bm)], 1))
    rows.append(np.stack([np.ones(mr), np.zeros(mr), 1 - ramp(mr)], 1))
    return np.concatenate(rows)


def flow_to_rgb(flow: FlowField | np.ndarray, max_magnitude: float | None = None) -> RgbImage:
    """Hue encodes direction and saturation encodes magnitude relative to ``max_magnitude``
    (the largest magnitude in the field when not given).  Zero flow is white."""
    data = flow.data if isinstance(flow, FlowField) else np.asarray(flow)
    u = data[0].astype(np.float64)
    v = data[1].astype(np.float64)
    mag = np.sqrt(u * u + v * v)
    scale = max_magnitude if max_magnitude is not None else float(mag.max())
    if scale <= 0:
        scale = 1.0
    u, v, mag = u / scale, v / scale, mag / scale
    wheel = color_wheel()
    n = len(wheel)
    angle = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (angle + 1) / 2 * (n - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % n
    f = (fk - k0)[..., None]
    col = (1 - f) * wheel[k0] + f * wheel[k1]
    m = np.minimum(mag, 1.0)[..., None]
    col = 1 - m * (1 - col)
    col = np.where(mag[..., None] > 1.0, col * 0.75, col)
    return RgbImage(np.clip(np.moveaxis(col, -1, 0), 0, 1))
