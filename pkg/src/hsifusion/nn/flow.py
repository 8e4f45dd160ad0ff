"""Coarse-to-fine flow estimation and feature-pyramid warping."""
from __future__ import annotations

import numpy as np

from ..engine import (
    ContractError,
    Conv2d,
    ConvSelu,
    Module,
    Tensor,
    avg_pool2d,
    concat,
    l2_normalize,
    local_correlation,
    mul,
    param,
    reshape,
    resize_bilinear,
    softmax,
    tsum,
    warp_bilinear,
)

FLOW_LEVELS = 3


class FlowFeatures(Module):
    """Shared feature pyramid at 1/2, 1/4 and 1/8 resolution."""

    def __init__(self, channels: int, rng, dtype=np.float32):
        self.c1 = ConvSelu(3, channels, 3, rng, stride=2, dtype=dtype)
        self.c2 = ConvSelu(channels, channels, 3, rng, dtype=dtype)
        self.c3 = ConvSelu(channels, channels, 3, rng, stride=2, dtype=dtype)
        self.c4 = ConvSelu(channels, channels, 3, rng, stride=2, dtype=dtype)

    def __call__(self, img: Tensor) -> list:
        half = self.c2(self.c1(img))
        quarter = self.c3(half)
        eighth = self.c4(quarter)
        return [half, quarter, eighth]


CORR_RADIUS = 2


class FlowHead(Module):
    """Predicts a flow increment from [target feats, warped source feats, cost volume, current flow]."""

    def __init__(self, feat: int, hidden: int, rng, dtype=np.float32):
        n_corr = (2 * CORR_RADIUS + 1) ** 2
        self.c1 = ConvSelu(2 * feat + n_corr + 2, hidden, 3, rng, dtype=dtype)
        self.c2 = ConvSelu(hidden, hidden, 3, rng, dtype=dtype)
        self.out = Conv2d(hidden, 2, 3, rng, dtype=dtype, zero=True)

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(self.c2(self.c1(x)))


def soft_argmax_displacement(corr: Tensor, beta: Tensor, radius: int) -> Tensor:
    """Expected displacement ``(dx, dy)`` under ``softmax(beta * corr)`` over the search window."""
    side = 2 * radius + 1
    d = np.arange(-radius, radius + 1, dtype=corr.dtype)
    dx = np.tile(d, side)[:, None, None]
    dy = np.repeat(d, side)[:, None, None]
    prob = softmax(mul(corr, beta), axis=0)
    return concat([tsum(mul(prob, Tensor(dx)), axis=0, keepdims=True),
                   tsum(mul(prob, Tensor(dy)), axis=0, keepdims=True)], axis=0)


class PyramidFlow(Module):
    """Three-level estimator: start at 1/8 scale, upsample x2 (doubling the
    displacement) and refine at 1/4 and 1/2, then upsample to full resolution.

    The returned flow warps the first argument onto the second.
    """

    def __init__(self, channels: int, hidden: int, rng, dtype=np.float32):
        self.features = FlowFeatures(channels, rng, dtype)
        self.heads = [FlowHead(channels, hidden, rng, dtype) for _ in range(FLOW_LEVELS)]
        self.beta = param(np.full(FLOW_LEVELS, 25.0, dtype=dtype))
        # weight of the soft-argmax estimate; zero so untrained estimators return zero flow
        self.gain = param(np.zeros(FLOW_LEVELS, dtype=dtype))

    def __call__(self, source: Tensor, target: Tensor) -> Tensor:
        if source.shape != target.shape:
            raise ContractError(f"flow inputs differ: {source.shape} vs {target.shape}")
        h, w = source.shape[1:]
        if h % 8 or w % 8:
            raise ContractError(f"flow estimator needs dims divisible by 8, got {h}x{w}")
        fs = self.features(source)
        ft = self.features(target)
        flow = None
        for level in range(FLOW_LEVELS - 1, -1, -1):
            lh, lw = ft[level].shape[1:]
            if flow is None:
                flow = Tensor(np.zeros((2, lh, lw), dtype=source.dtype))
            else:
                flow = resize_bilinear(flow, lh, lw) * 2.0
            warped = warp_bilinear(fs[level], flow)
            corr = local_correlation(l2_normalize(ft[level]), l2_normalize(warped), CORR_RADIUS)
            beta = reshape(self.beta[level:level + 1], (1, 1, 1))
            gain = reshape(self.gain[level:level + 1], (1, 1, 1))
            step = self.heads[level](concat([ft[level], warped, corr, flow], axis=0))
            flow = flow + step + mul(soft_argmax_displacement(corr, beta, CORR_RADIUS), gain)
        return resize_bilinear(flow, h, w) * 2.0


def estimate_flow_coarse(ref: Tensor, hsi_rgb: Tensor, params: PyramidFlow) -> Tensor:
    """Full-resolution flow that warps ``ref`` towards ``hsi_rgb``."""
    return params(ref, hsi_rgb)


def flow_pyramid(flow: Tensor, levels: int = 4) -> list:
    """Level-native flows: each level is the 2x2 average of the previous one, halved."""
    out = [flow]
    for _ in range(levels - 1):
        out.append(avg_pool2d(out[-1], 2) * 0.5)
    return out


def estimate_flow_multilevel(ref2: Tensor, hsi_rgb: Tensor, params: PyramidFlow, levels: int = 4) -> list:
    return flow_pyramid(params(ref2, hsi_rgb), levels)


def compose_flows(first: Tensor, second: Tensor) -> Tensor:
    """Total displacement of warping by ``first`` and then by ``second``.

    ``warp(warp(x, first), second)(p) = x(p + second(p) + first(p + second(p)))``.
    """
    return second + warp_bilinear(first, second)


def align_reference(pyramid: list, flows: list) -> list:
    if len(pyramid) != len(flows):
        raise ContractError(f"{len(pyramid)} feature levels but {len(flows)} flows")
    out = []
    for feat, flow in zip(pyramid, flows):
        if feat.shape[1:] != flow.shape[1:]:
            raise ContractError(f"feature level {feat.shape} does not match flow {flow.shape}")
        out.append(warp_bilinear(feat, flow))
    return out
