"""Cube/image containers, binary formats and image export.

HSIC layout (little-endian)::

    b"HSIC" | u32 version=1 | u32 B | u32 H | u32 W | u32 has_wavelengths
    [f32 x B wavelengths, nm]            # only when has_wavelengths == 1
    f32 x (B*H*W) payload, band-major

FLOW layout: ``b"FLOW" | u32 H | u32 W | f32 dx plane | f32 dy plane``.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HSIC_MAGIC = b"HSIC"
HSIC_VERSION = 1
FLOW_MAGIC = b"FLOW"
RAW_12BIT_MAX = 4095.0


class FormatError(ValueError):
    kind = "format"


class BadMagicError(FormatError):
    kind = "bad-magic"


class TruncatedError(FormatError):
    kind = "truncated"


class ValueRangeError(FormatError):
    kind = "value-range"


class VersionError(FormatError):
    kind = "version"


@dataclass
class HsiCube:
    """``data`` is float32 ``[B, H, W]`` with values in [0, 1]."""

    data: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] < 1:
            raise ValueError(f"HsiCube needs [B,H,W] with B >= 1, got {self.data.shape}")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=np.float32)
            if self.wavelengths.shape != (self.bands,):
                raise ValueError("one wavelength label per band expected")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def check_range(self) -> None:
        if not np.all(np.isfinite(self.data)) or self.data.min() < 0 or self.data.max() > 1:
            raise ValueRangeError("cube values must lie in [0, 1]")

    @classmethod
    def from_raw12(cls, raw, wavelengths=None) -> "HsiCube":
        """Normalise raw 12-bit counts (0..4095) to [0, 1]."""
        return cls(np.asarray(raw, dtype=np.float64) / RAW_12BIT_MAX, wavelengths)


@dataclass
class RgbImage:
    """``data`` is float32 ``[3, H, W]`` in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValueError(f"RgbImage needs [3,H,W], got {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class FlowField:
    """``data`` is ``[2, H, W]``: per-pixel (dx, dy) displacement in pixels."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ValueError(f"FlowField needs [2,H,W], got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("flow values must be finite")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


# -- HSIC ----------------------------------------------------------------------

def write_cube(cube: HsiCube, path) -> None:
    cube.check_range()
    b, h, w = cube.data.shape
    has_wl = cube.wavelengths is not None
    with open(path, "wb") as fh:
        fh.write(HSIC_MAGIC)
        fh.write(struct.pack("<5I", HSIC_VERSION, b, h, w, int(has_wl)))
        if has_wl:
            fh.write(cube.wavelengths.astype("<f4").tobytes())
        fh.write(cube.data.astype("<f4").tobytes())


def read_cube(path) -> HsiCube:
    raw = Path(path).read_bytes()
    if raw[:4] != HSIC_MAGIC:
        raise BadMagicError(f"{path}: expected magic {HSIC_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < 24:
        raise TruncatedError(f"{path}: header truncated")
    version, b, h, w, has_wl = struct.unpack_from("<5I", raw, 4)
    if version != HSIC_VERSION:
        raise VersionError(f"{path}: unsupported HSIC version {version}")
    offset = 24
    wavelengths = None
    if has_wl:
        if len(raw) < offset + 4 * b:
            raise TruncatedError(f"{path}: wavelength block truncated")
        wavelengths = np.frombuffer(raw, "<f4", b, offset).astype(np.float32)
        offset += 4 * b
    n = b * h * w
    if len(raw) < offset + 4 * n:
        raise TruncatedError(f"{path}: payload has {len(raw) - offset} bytes, need {4 * n}")
    data = np.frombuffer(raw, "<f4", n, offset).astype(np.float32).reshape(b, h, w)
    cube = HsiCube(data, wavelengths)
    cube.check_range()
    return cube


# -- FLOW ----------------------------------------------------------------------

def write_flow(flow: FlowField, path) -> None:
    _, h, w = flow.data.shape
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(struct.pack("<2I", h, w))
        fh.write(flow.data.astype("<f4").tobytes())


def read_flow(path) -> FlowField:
    raw = Path(path).read_bytes()
    if raw[:4] != FLOW_MAGIC:
        raise BadMagicError(f"{path}: expected magic {FLOW_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < 12:
        raise TruncatedError(f"{path}: header truncated")
    h, w = struct.unpack_from("<2I", raw, 4)
    n = 2 * h * w
    if len(raw) < 12 + 4 * n:
        raise TruncatedError(f"{path}: flow payload truncated")
    return FlowField(np.frombuffer(raw, "<f4", n, 12).reshape(2, h, w))


# -- PPM / PGM -------------------------------------------------------------------

def to_bytes(values: np.ndarray) -> np.ndarray:
    """Quantise [0, 1] floats to 8 bits, rounding halves up."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def export_ppm(img: RgbImage, path) -> None:
    pixels = to_bytes(np.moveaxis(img.data, 0, -1))
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def export_pgm(gray: np.ndarray, path) -> None:
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM export needs a 2D map, got {gray.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii"))
        fh.write(to_bytes(gray).tobytes())


def parse_netpbm(path):
    """Parse a binary P5/P6 file with maxval 255; returns (magic, uint8 array)."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: incomplete netpbm header")
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1  # single whitespace byte after maxval
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in ("P5", "P6") or maxval != 255:
        raise FormatError(f"{path}: unsupported netpbm header {tokens}")
    channels = 3 if magic == "P6" else 1
    body = raw[pos:]
    if len(body) != w * h * channels:
        raise TruncatedError(f"{path}: pixel data has {len(body)} bytes, need {w * h * channels}")
    arr = np.frombuffer(body, np.uint8).reshape(h, w, channels) if channels == 3 else \
        np.frombuffer(body, np.uint8).reshape(h, w)
    return magic, arr


def read_ppm(path) -> RgbImage:
    magic, arr = parse_netpbm(path)
    if magic != "P6":
        raise FormatError(f"{path}: expected P6")
    return RgbImage(np.moveaxis(arr.astype(np.float32) / 255.0, -1, 0))


# -- bicubic resize ------------------------------------------------------------

def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Weights of the four taps at offsets -1, 0, 1, 2 for fractional position t."""
    t2, t3 = t * t, t * t * t
    return np.stack([
        0.5 * (-t3 + 2 * t2 - t),
        0.5 * (3 * t3 - 5 * t2 + 2),
        0.5 * (-3 * t3 + 4 * t2 + t),
        0.5 * (t3 - t2),
    ], axis=-1)


def cubic_resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``[n_out, n_in]`` Catmull-Rom interpolation matrix, half-pixel centres, clamped edges."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(int)
    wts = _catmull_rom(src - base)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for tap in range(4):
        idx = np.clip(base + tap - 1, 0, n_in - 1)
        np.add.at(m, (rows, idx), wts[:, tap])
    return m


def bicubic_resize(cube: HsiCube, factor) -> HsiCube:
    """Resize every band by ``factor`` (any positive rational) and clamp to [0, 1]."""
    _, h, w = cube.data.shape
    oh, ow = int(round(h * float(factor))), int(round(w * float(factor)))
    if oh < 1 or ow < 1:
        raise ValueError(f"target size {oh}x{ow} is empty")
    out = resize_cubic_array(cube.data.astype(np.float64), oh, ow)
    return HsiCube(np.clip(out, 0.0, 1.0), cube.wavelengths)


def resize_cubic_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Unclamped Catmull-Rom resize of the last two axes of ``arr``."""
    my = cubic_resize_matrix(arr.shape[-2], out_h)
    mx = cubic_resize_matrix(arr.shape[-1], out_w)
    return my @ arr @ mx.T


# -- CSV reports -------------------------------------------------------------------

METRIC_COLUMNS = ("id", "psnr", "ssim", "sam")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
