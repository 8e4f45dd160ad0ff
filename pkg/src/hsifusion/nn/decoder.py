"""Multi-level fusion decoder built from upsampling QRUs."""
from __future__ import annotations

import numpy as np

from ..engine import ContractError, Module, Tensor, broadcast_to, concat, reshape
from .encoders import QRU


def broadcast_band(f: Tensor, bands: int) -> Tensor:
    """``[C, H, W] -> [C, B, H, W]`` by replication; the gradient sums over bands."""
    if bands < 1:
        raise ContractError("band count must be >= 1")
    c, h, w = f.shape
    return broadcast_to(reshape(f, (c, 1, h, w)), (c, bands, h, w))


class FusionDecoder(Module):
    """Three upsampling QRUs (1/8 -> 1/4 -> 1/2 -> 1) and a final full-resolution Bi-QRU.

    Each stage consumes ``[previous decoder features, a_hsi * F_hsi, a_ref * broadcast(F_ref3)]``
    at its level, with the reference part passed as band-shared channels.  The final Bi-QRU emits one channel: the per-band residual.
    With all-zero inputs and biases the output is exactly zero (gate 0.5, candidate tanh(0)).
    """

    def __init__(self, hsi_channels: int, ref_channels: int, channels: int, rng, dtype=np.float32):
        directions = ("forward", "backward", "forward")
        self.stages = []
        for i, direction in enumerate(directions):
            c_in = hsi_channels + ref_channels + (channels if i else 0)
            self.stages.append(QRU(c_in, channels, rng, direction, upsample=True, dtype=dtype))
        self.final = QRU(channels + hsi_channels + ref_channels, 1, rng, "bidirectional", dtype=dtype)

    def __call__(self, ref_pyr: list, hsi_pyr: list, alpha_hsi: float = 1.0,
                 alpha_ref: float = 1.0) -> Tensor:
        if len(ref_pyr) != len(hsi_pyr) or len(ref_pyr) != len(self.stages) + 1:
            raise ContractError("decoder needs four aligned pyramid levels")
        x = None
        for level in range(len(ref_pyr) - 1, -1, -1):
            f_hsi, f_ref = hsi_pyr[level], ref_pyr[level]
            if f_hsi.shape[2:] != f_ref.shape[1:]:
                raise ContractError(
                    f"level {level}: HSI features {f_hsi.shape} vs reference {f_ref.shape}")
            main = f_hsi * alpha_hsi if x is None else concat([x, f_hsi * alpha_hsi], axis=0)
            stage = self.stages[len(ref_pyr) - 1 - level] if level else self.final
            # the reference features are band-invariant; the QRU handles them as shared channels
            x = stage(main, shared=f_ref * alpha_ref)
        return x


def decode_fuse(ref3_pyr: list, hsi_pyr: list, params: FusionDecoder, alpha_hsi: float = 1.0,
                alpha_ref: float = 1.0) -> Tensor:
    return params(ref3_pyr, hsi_pyr, alpha_hsi, alpha_ref)
