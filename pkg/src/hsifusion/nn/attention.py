"""Element-wise attention over aligned reference features."""
from __future__ import annotations

import numpy as np

from ..engine import (
    ContractError,
    Conv2d,
    ConvSelu,
    Module,
    Tensor,
    concat,
    mul,
    selu,
    sigmoid,
)


class FlowEmbed(Module):
    def __init__(self, channels: int, rng, dtype=np.float32):
        self.c1 = ConvSelu(2, channels, 3, rng, dtype=dtype)
        self.c2 = ConvSelu(channels, channels, 3, rng, dtype=dtype)

    def __call__(self, flow: Tensor) -> Tensor:
        return self.c2(self.c1(flow))


class ResBlock(Module):
    def __init__(self, channels: int, rng, dtype=np.float32):
        self.c1 = ConvSelu(channels, channels, 3, rng, dtype=dtype)
        self.c2 = Conv2d(channels, channels, 3, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return selu(x + self.c2(self.c1(x)))


class AttentionLevel(Module):
    """``sigmoid(ResCNN([G(F_ref), G(F_hrgb), E_f(V)]))`` for one pyramid level."""

    def __init__(self, feat_channels: int, flow_channels: int, reduce_channels: int, hidden: int,
                 rng, dtype=np.float32, n_blocks: int = 2):
        self.embed = FlowEmbed(flow_channels, rng, dtype)
        self.reduce = Conv2d(feat_channels, reduce_channels, 1, rng, dtype=dtype)
        self.head = ConvSelu(2 * reduce_channels + flow_channels, hidden, 3, rng, dtype=dtype)
        self.blocks = [ResBlock(hidden, rng, dtype) for _ in range(n_blocks)]
        self.out = Conv2d(hidden, 1, 3, rng, dtype=dtype)

    def __call__(self, f_ref: Tensor, f_hrgb: Tensor, flow: Tensor) -> Tensor:
        return self.weights(f_ref, f_hrgb, self.embed(flow))

    def weights(self, f_ref: Tensor, f_hrgb: Tensor, f_flow: Tensor) -> Tensor:
        if f_ref.shape != f_hrgb.shape or f_ref.shape[1:] != f_flow.shape[1:]:
            raise ContractError(
                f"attention inputs disagree: {f_ref.shape}, {f_hrgb.shape}, flow {f_flow.shape}")
        x = concat([self.reduce(f_ref), self.reduce(f_hrgb), f_flow], axis=0)
        x = self.head(x)
        for block in self.blocks:
            x = block(x)
        return sigmoid(self.out(x))


def embed_flow(flow: Tensor, params: FlowEmbed) -> Tensor:
    return params(flow)


def attention_weights(f_ref: Tensor, f_hrgb: Tensor, f_flow: Tensor, params: AttentionLevel) -> Tensor:
    """Attention map from already-embedded flow features ``f_flow``."""
    return params.weights(f_ref, f_hrgb, f_flow)


def apply_attention(weights: Tensor, features: Tensor) -> Tensor:
    """Scale every channel of ``features`` by the single-channel ``weights`` map."""
    if weights.ndim != 3 or weights.shape[0] != 1 or weights.shape[1:] != features.shape[1:]:
        raise ContractError(f"attention map {weights.shape} vs features {features.shape}")
    return mul(features, weights)
