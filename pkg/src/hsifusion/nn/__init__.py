"""Network building blocks of the fusion model."""
from .attention import (
    AttentionLevel,
    FlowEmbed,
    apply_attention,
    attention_weights,
    embed_flow,
)
from .decoder import FusionDecoder, broadcast_band, decode_fuse
from .encoders import QRU, HsiEncoder, RgbEncoder, hsi_encode, qru_forward, rgb_encode
from .flow import (
    PyramidFlow,
    align_reference,
    compose_flows,
    estimate_flow_coarse,
    estimate_flow_multilevel,
    flow_pyramid,
)
from .model import HSIFN, VARIANTS, NetConfig, hsifn_forward, prepare_inputs

__all__ = [
    "HSIFN", "QRU", "VARIANTS", "AttentionLevel", "FlowEmbed", "FusionDecoder", "HsiEncoder",
    "NetConfig", "PyramidFlow", "RgbEncoder", "align_reference", "apply_attention",
    "attention_weights", "broadcast_band", "compose_flows", "decode_fuse", "embed_flow",
    "estimate_flow_coarse", "estimate_flow_multilevel", "flow_pyramid", "hsi_encode",
    "hsifn_forward", "prepare_inputs", "qru_forward", "rgb_encode",
]
