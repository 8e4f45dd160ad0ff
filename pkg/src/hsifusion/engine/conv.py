"""Convolutions for the tensor engine.

Inputs are unbatched: conv2d takes ``[C, H, W]`` and conv3d ``[C, B, H, W]``.
Convolutions are lowered to matrix products over an im2col buffer laid out
kernel-offset-major.  Large inputs are processed in chunks of output rows so
the buffer stays bounded.  Chunking and reduction order depend only on the
shapes, so repeated runs are bitwise identical.
"""
from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor, make_node


def _out_len(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _window(offset, stride, out_sp, rows) -> tuple:
    r0, r1 = rows
    first = slice(offset[0] + stride[0] * r0, offset[0] + stride[0] * (r1 - 1) + 1, stride[0])
    return (slice(None), first) + tuple(
        slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset[1:], stride[1:], out_sp[1:])
    )


_COLS_LIMIT = 4 * 2**20  # im2col elements per chunk


def _chunks(n_rows: int, row_cols: int) -> list:
    per = max(1, _COLS_LIMIT // max(row_cols, 1))
    return [(r, min(r + per, n_rows)) for r in range(0, n_rows, per)]


def _columns(xp: np.ndarray, offsets, stride, out_sp, rows) -> np.ndarray:
    c_in = xp.shape[0]
    sub = (rows[1] - rows[0],) + tuple(out_sp[1:])
    cols = np.empty((len(offsets), c_in) + sub, dtype=xp.dtype)
    for i, off in enumerate(offsets):
        cols[i] = xp[_window(off, stride, out_sp, rows)]
    return cols.reshape(len(offsets) * c_in, -1)


def _convnd(x: Tensor, w: Tensor, b: Tensor | None, stride: tuple, pad: tuple) -> Tensor:
    c_in = x.shape[0]
    c_out = w.shape[0]
    ksize = w.shape[2:]
    if w.shape[1] != c_in:
        raise ContractError(f"conv: input has {c_in} channels, kernel expects {w.shape[1]}")
    if b is not None and b.shape != (c_out,):
        raise ContractError(f"conv: bias shape {b.shape} != ({c_out},)")
    sp = x.shape[1:]
    out_sp = tuple(_out_len(n, k, s, p) for n, k, s, p in zip(sp, ksize, stride, pad))
    if min(out_sp) < 1:
        raise ContractError(f"conv: kernel {ksize} larger than padded input {sp}")
    xp = np.pad(x.data, [(0, 0)] + [(p, p) for p in pad]) if any(pad) else x.data
    offsets = list(np.ndindex(*ksize))
    n_k = len(offsets)
    # [C_out, K*C_in] with kernel offsets as the outer block index
    wmat = np.moveaxis(w.data.reshape(c_out, c_in, n_k), 1, 2).reshape(c_out, n_k * c_in)
    row_size = int(np.prod(out_sp[1:]))
    chunks = _chunks(out_sp[0], n_k * c_in * row_size)
    out = np.empty((c_out, out_sp[0] * row_size), dtype=x.dtype)
    for rows in chunks:
        out[:, rows[0] * row_size:rows[1] * row_size] = wmat @ _columns(xp, offsets, stride, out_sp, rows)
    if b is not None:
        out += b.data[:, None]
    out = out.reshape((c_out,) + out_sp)

    def backward(g):
        g2 = g.reshape(c_out, -1)
        gx = gw = gb = None
        gwm = np.zeros_like(wmat) if w.requires_grad else None
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for rows in chunks:
            gc = g2[:, rows[0] * row_size:rows[1] * row_size]
            if gwm is not None:
                gwm += gc @ _columns(xp, offsets, stride, out_sp, rows).T
            if gxp is not None:
                sub = (c_in, rows[1] - rows[0]) + tuple(out_sp[1:])
                gcols = wmat.T @ gc
                for i, off in enumerate(offsets):
                    gxp[_window(off, stride, out_sp, rows)] += gcols[i * c_in:(i + 1) * c_in].reshape(sub)
        if gwm is not None:
            gw = np.moveaxis(gwm.reshape(c_out, n_k, c_in), 1, 2).reshape(w.shape)
        if gxp is not None:
            crop = (slice(None),) + tuple(slice(p, p + n) for p, n in zip(pad, sp))
            gx = gxp[crop]
        if b is not None and b.requires_grad:
            gb = g2.sum(axis=1)
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, backward)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2D convolution (cross-correlation) of a ``[C_in, H, W]`` input."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise ContractError(f"conv2d expects [C,H,W] and [Co,Ci,k,k], got {x.shape}, {kernel.shape}")
    k = kernel.shape[2]
    if kernel.shape[3] != k or k % 2 == 0:
        raise ContractError(f"conv2d needs a square odd kernel, got {kernel.shape[2:]}")
    if stride not in (1, 2) or padding < 0:
        raise ContractError(f"conv2d: bad stride {stride} / padding {padding}")
    return _convnd(x, kernel, bias, (stride, stride), (padding, padding))


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride_spatial: int = 1,
           padding=None) -> Tensor:
    """3D convolution over ``[C_in, B, H, W]``; the band axis always has stride 1.

    ``padding`` is ``(band, height, width)``; it defaults to half the kernel
    extents.  The band padding must equal ``(kb - 1) / 2`` so the number of
    bands is preserved.
    """
    if x.ndim != 4 or kernel.ndim != 5:
        raise ContractError(f"conv3d expects [C,B,H,W] and [Co,Ci,kb,kh,kw], got {x.shape}, {kernel.shape}")
    kb, kh, kw = kernel.shape[2:]
    if kb % 2 == 0 or kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"conv3d kernel extents must be odd, got {(kb, kh, kw)}")
    if padding is None:
        padding = (kb // 2, kh // 2, kw // 2)
    if isinstance(padding, int):
        padding = (kb // 2, padding, padding)
    padding = tuple(int(p) for p in padding)
    if padding[0] != (kb - 1) // 2:
        raise ContractError(f"conv3d band padding {padding[0]} inconsistent with kb={kb}")
    if stride_spatial not in (1, 2):
        raise ContractError(f"conv3d: bad spatial stride {stride_spatial}")
    return _convnd(x, kernel, bias, (1, stride_spatial, stride_spatial), padding)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling of the last two (spatial) axes."""
    out = np.repeat(np.repeat(x.data, factor, axis=-2), factor, axis=-1)
    lead = x.shape[:-2]
    h, w = x.shape[-2:]

    def backward(g):
        return (g.reshape(lead + (h, factor, w, factor)).sum(axis=(-3, -1)),)

    return make_node(out, (x,), backward)


def conv3d_upsample(x: Tensor, kernel: Tensor, bias: Tensor | None = None, factor: int = 2) -> Tensor:
    """Spatial x2 nearest upsample followed by a same-padded conv3d."""
    if factor != 2:
        raise ContractError(f"conv3d_upsample supports factor 2 only, got {factor}")
    return conv3d(upsample_nearest(x, factor), kernel, bias, stride_spatial=1)
