"""RGB convolutional encoder and QRU-based HSI encoder."""
from __future__ import annotations

import numpy as np

from ..engine import (
    ContractError,
    ConvSelu,
    Module,
    Tensor,
    add,
    concat,
    conv2d,
    conv3d,
    conv3d_upsample,
    param,
    qru_scan,
    reshape,
    sigmoid,
    split,
    tanh,
    uniform_init,
    upsample_nearest,
)

N_LEVELS = 4
DIRECTIONS = ("forward", "backward", "bidirectional")


class RgbEncoder(Module):
    """Five 5x5 conv+SELU layers; the last three halve the resolution.

    The pyramid is the output of layers 2..5, i.e. scales 1, 1/2, 1/4, 1/8.
    """

    def __init__(self, channels: int, rng, dtype=np.float32, in_channels: int = 3):
        strides = (1, 1, 2, 2, 2)
        self.layers = []
        c_in = in_channels
        for s in strides:
            self.layers.append(ConvSelu(c_in, channels, 5, rng, stride=s, dtype=dtype))
            c_in = channels
        self.channels = channels

    def __call__(self, img: Tensor) -> list:
        if img.shape[1] % 8 or img.shape[2] % 8:
            raise ContractError(f"rgb_encode: spatial dims {img.shape[1:]} must be divisible by 8")
        x = img
        pyramid = []
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i >= 1:
                pyramid.append(x)
        return pyramid


class QRU(Module):
    """Quasi-recurrent unit: two 3x3x3 convolutions produce a gate and a candidate
    per band, which a gated recurrence merges along the spectral axis.

    ``bidirectional`` sums the forward and backward recurrences over the same
    gates and candidates.  ``upsample=True`` doubles the spatial size before
    the convolutions; ``stride=2`` halves it.
    """

    def __init__(self, c_in: int, c_out: int, rng, direction: str = "forward", stride: int = 1,
                 upsample: bool = False, dtype=np.float32, zero_candidate: bool = False):
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        shape = (c_out, c_in, 3, 3, 3)
        fan_in = c_in * 27
        self.w_gate = param(uniform_init(rng, shape, fan_in, dtype))
        self.b_gate = param(np.zeros(c_out, dtype))
        cand = np.zeros(shape, dtype) if zero_candidate else uniform_init(rng, shape, fan_in, dtype)
        self.w_cand = param(cand)
        self.b_cand = param(np.zeros(c_out, dtype))
        self.direction = direction
        self.stride = stride
        self.upsample = upsample

    def _conv(self, x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
        if self.upsample:
            return conv3d_upsample(x, w, b)
        return conv3d(x, w, b, stride_spatial=self.stride)

    def _shared_conv(self, f: Tensor, w: Tensor, bands: int) -> Tensor:
        """conv3d of ``f [C, H, W]`` replicated over ``bands``, without replicating it.

        Every band sees the same 2D responses ``Y_k`` (one per band tap k);
        only the edge bands miss the taps that fall into the zero padding.
        """
        if self.upsample:
            f = upsample_nearest(f)
        kb = w.shape[2]
        c_out = w.shape[0]
        kernel2d = concat([w[:, :, k] for k in range(kb)], axis=0)
        y = conv2d(f, kernel2d, stride=self.stride, padding=w.shape[3] // 2)
        taps = split(y, kb, axis=0)
        h, wd = y.shape[1:]
        half = kb // 2
        slabs = []
        for band in range(bands):
            valid = [taps[k] for k in range(kb) if 0 <= band + k - half < bands]
            total = valid[0]
            for t in valid[1:]:
                total = total + t
            slabs.append(reshape(total, (c_out, 1, h, wd)))
        return concat(slabs, axis=1)

    def gates(self, x: Tensor, shared: Tensor | None = None):
        # one convolution with stacked kernels shares the im2col buffer
        w = concat([self.w_gate, self.w_cand], axis=0)
        b = concat([self.b_gate, self.b_cand], axis=0)
        if shared is None:
            pre = self._conv(x, w, b)
        else:
            c_main = x.shape[0]
            if c_main + shared.shape[0] != w.shape[1]:
                raise ContractError(
                    f"QRU expects {w.shape[1]} input channels, got {c_main} + {shared.shape[0]}")
            pre = self._conv(x, w[:, :c_main], b) + self._shared_conv(shared, w[:, c_main:], x.shape[1])
        pre_gate, pre_cand = split(pre, 2, axis=0)
        return sigmoid(pre_gate), tanh(pre_cand)

    def __call__(self, x: Tensor, shared: Tensor | None = None) -> Tensor:
        """``shared`` holds extra ``[C, H, W]`` input channels that are identical in every
        band; the result equals running on ``x`` concatenated with their band-wise copies."""
        gate, cand = self.gates(x, shared)
        if self.direction == "forward":
            return qru_scan(gate, cand)
        if self.direction == "backward":
            return qru_scan(gate, cand, reverse=True)
        return add(qru_scan(gate, cand), qru_scan(gate, cand, reverse=True))


def qru_forward(x: Tensor, params: QRU) -> Tensor:
    return params(x)


class HsiEncoder(Module):
    """Bi-QRU at full resolution, then three stride-2 QRUs with alternating direction."""

    def __init__(self, channels: int, rng, dtype=np.float32):
        self.layers = [
            QRU(1, channels, rng, "bidirectional", stride=1, dtype=dtype),
            QRU(channels, channels, rng, "forward", stride=2, dtype=dtype),
            QRU(channels, channels, rng, "backward", stride=2, dtype=dtype),
            QRU(channels, channels, rng, "forward", stride=2, dtype=dtype),
        ]
        self.channels = channels

    def __call__(self, cube_up: Tensor) -> list:
        if cube_up.ndim == 3:
            cube_up = reshape(cube_up, (1,) + cube_up.shape)
        if cube_up.shape[2] % 8 or cube_up.shape[3] % 8:
            raise ContractError(f"hsi_encode: spatial dims {cube_up.shape[2:]} must be divisible by 8")
        x = cube_up
        pyramid = []
        for layer in self.layers:
            x = layer(x)
            pyramid.append(x)
        return pyramid


def rgb_encode(img: Tensor, params: RgbEncoder) -> list:
    return params(img)


def hsi_encode(cube_up: Tensor, params: HsiEncoder) -> list:
    return params(cube_up)
