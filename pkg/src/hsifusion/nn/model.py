"""Full fusion network: encoders, two-stage alignment, attention, decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..degrade import Srf, project_array
from ..engine import (
    ContractError,
    Module,
    Tensor,
    clamp,
    no_grad,
    reshape,
    warp_bilinear,
)
from ..io import HsiCube, RgbImage, bicubic_resize
from .attention import AttentionLevel, apply_attention
from .decoder import FusionDecoder
from .encoders import N_LEVELS, HsiEncoder, RgbEncoder
from .flow import PyramidFlow, align_reference, compose_flows, flow_pyramid

VARIANTS = ("full", "no_attention", "no_align", "sisr_only")


@dataclass
class NetConfig:
    bands: int = 8
    rgb_channels: int = 64
    hsi_channels: int = 16
    dec_channels: int = 16
    flow_channels: int = 16
    flow_hidden: int = 32
    att_flow_channels: int = 16
    att_reduce_channels: int = 16
    att_hidden: int = 16
    alpha_hsi: float = 1.0
    alpha_ref: float = 1.0

    def __post_init__(self):
        if self.alpha_hsi <= 0 or self.alpha_ref <= 0:
            raise ValueError("feature-balance scales must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class HSIFN(Module):
    def __init__(self, config: NetConfig, seed: int = 0, dtype=np.float32, srf: Srf | None = None):
        rng = np.random.default_rng(seed)
        c = config
        self.config = c
        self.dtype = np.dtype(dtype)
        self.srf = srf if srf is not None else Srf.default(c.bands)
        if self.srf.bands != c.bands:
            raise ValueError("SRF band count does not match the network")
        self.rgb_encoder = RgbEncoder(c.rgb_channels, rng, dtype)
        self.hsi_encoder = HsiEncoder(c.hsi_channels, rng, dtype)
        self.flow1 = PyramidFlow(c.flow_channels, c.flow_hidden, rng, dtype)
        self.flow2 = PyramidFlow(c.flow_channels, c.flow_hidden, rng, dtype)
        self.attention = [
            AttentionLevel(c.rgb_channels, c.att_flow_channels, c.att_reduce_channels, c.att_hidden,
                           rng, dtype)
            for _ in range(N_LEVELS)
        ]
        self.decoder = FusionDecoder(c.hsi_channels, c.rgb_channels, c.dec_channels, rng, dtype)

    def parameter_groups(self) -> dict:
        groups = {}
        for name, p in self.named_parameters():
            groups.setdefault(name.split(".")[0], []).append(p)
        return groups

    # -- stages -------------------------------------------------------------
    def align(self, r_ref: Tensor, r_hsi: Tensor) -> list:
        """Coarse warp of the reference, refined multi-level flows, composed into
        total displacements that act on the unwarped reference features."""
        flow1 = self.flow1(r_ref, r_hsi)
        r_ref2 = warp_bilinear(r_ref, flow1)
        flow2 = self.flow2(r_ref2, r_hsi)
        return flow_pyramid(compose_flows(flow1, flow2), N_LEVELS)

    def forward(self, h_up, r_ref, r_hsi, variant: str = "full", aux: dict | None = None) -> Tensor:
        """Residual ``[B, H, W]`` to add to the upsampled cube.

        ``h_up`` is ``[B, H, W]``; ``r_ref`` and ``r_hsi`` are ``[3, H, W]``.
        """
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        dt = self.dtype
        h_up = _tensor(h_up, dt)
        r_ref = _tensor(r_ref, dt)
        r_hsi = _tensor(r_hsi, dt)
        b, h, w = h_up.shape
        if b != self.config.bands:
            raise ContractError(f"hsi_encode: network built for {self.config.bands} bands, got {b}")
        if r_ref.shape != (3, h, w) or r_hsi.shape != (3, h, w):
            raise ContractError(f"align: reference {r_ref.shape} / HSI-RGB {r_hsi.shape} vs cube {h_up.shape}")

        hsi_pyr = self.hsi_encoder(reshape(h_up, (1, b, h, w)))
        if variant == "sisr_only":
            ref3 = [Tensor(np.zeros((self.config.rgb_channels,) + f.shape[2:], dt)) for f in hsi_pyr]
        else:
            ref_pyr = self.rgb_encoder(r_ref)
            if variant == "no_align":
                flows = [Tensor(np.zeros((2,) + f.shape[1:], dt)) for f in ref_pyr]
                ref2 = ref_pyr
            else:
                flows = self.align(r_ref, r_hsi)
                ref2 = align_reference(ref_pyr, flows)
            if variant == "no_attention":
                ref3 = ref2
            else:
                hrgb_pyr = self.rgb_encoder(r_hsi)
                ref3 = []
                for i, att in enumerate(self.attention):
                    weights = att(ref_pyr[i], hrgb_pyr[i], flows[i])
                    if aux is not None:
                        aux.setdefault("attention", []).append(weights)
                    ref3.append(apply_attention(weights, ref2[i]))
            if aux is not None:
                aux["flows"] = flows
        res = self.decoder(ref3, hsi_pyr, self.config.alpha_hsi, self.config.alpha_ref)
        return reshape(res, (b, h, w))

    def predict(self, h_up, r_ref, r_hsi, variant: str = "full", aux: dict | None = None) -> Tensor:
        """``clamp(h_up + residual, 0, 1)`` as a differentiable tensor."""
        res = self.forward(h_up, r_ref, r_hsi, variant, aux)
        return clamp(res + _tensor(h_up, self.dtype), 0.0, 1.0)

    def hsi_rgb(self, cube_data: np.ndarray) -> np.ndarray:
        return np.clip(project_array(cube_data, self.srf.matrix), 0.0, 1.0)


def _tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x if x.dtype == dtype else Tensor(x.data.astype(dtype))
    if isinstance(x, (HsiCube, RgbImage)):
        x = x.data
    return Tensor(np.asarray(x, dtype=dtype))


def prepare_inputs(h_lr: HsiCube, r_ref: RgbImage, model: HSIFN, scale: int):
    """Upsampled cube and its synthetic RGB rendering for a low-resolution input."""
    if r_ref.height != h_lr.height * scale or r_ref.width != h_lr.width * scale:
        raise ContractError(
            f"input: reference {r_ref.height}x{r_ref.width} != {scale} x LR {h_lr.height}x{h_lr.width}")
    if r_ref.height % 8 or r_ref.width % 8:
        raise ContractError("input: output dims must be divisible by 8")
    h_up = bicubic_resize(h_lr, scale).data
    return h_up, model.hsi_rgb(h_up)


def hsifn_forward(h_lr: HsiCube, r_ref: RgbImage, model: HSIFN, scale: int,
                  variant: str = "full", aux: dict | None = None) -> HsiCube:
    """Super-resolve ``h_lr`` by ``scale`` guided by the reference image."""
    h_up, r_hsi = prepare_inputs(h_lr, r_ref, model, scale)
    with no_grad():
        out = model.predict(h_up, r_ref.data, r_hsi, variant, aux)
    return HsiCube(out.data, h_lr.wavelengths)
