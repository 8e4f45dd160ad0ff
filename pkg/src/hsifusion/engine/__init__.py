"""Deterministic numpy tensor engine with reverse-mode differentiation."""
from .conv import conv2d, conv3d, conv3d_upsample, upsample_nearest
from .module import Conv2d, ConvSelu, Module, param, uniform_init
from .optim import AdamW, AdamWState, NonFiniteGradient
from .sampling import (
    avg_pool2d,
    linear_resize_matrix,
    local_correlation,
    resize_bilinear,
    warp_bilinear,
)
from .scan import qru_scan
from .tensor import (
    SELU_ALPHA,
    SELU_LAMBDA,
    ContractError,
    Tensor,
    activation,
    add,
    broadcast_to,
    clamp,
    concat,
    flip,
    is_grad_enabled,
    l2_normalize,
    mean,
    mul,
    no_grad,
    reshape,
    selu,
    sigmoid,
    smooth_l1,
    softmax,
    split,
    square,
    tanh,
    tsum,
)

__all__ = [
    "SELU_ALPHA", "SELU_LAMBDA", "AdamW", "AdamWState", "ContractError", "Conv2d", "ConvSelu",
    "Module", "NonFiniteGradient", "Tensor", "activation", "add", "avg_pool2d", "broadcast_to",
    "clamp", "concat", "conv2d", "conv3d", "conv3d_upsample", "flip", "is_grad_enabled", "l2_normalize",
    "linear_resize_matrix", "local_correlation", "mean", "mul", "no_grad", "param", "qru_scan", "reshape",
    "resize_bilinear", "selu", "sigmoid", "smooth_l1", "softmax", "split", "square", "tanh", "tsum",
    "uniform_init", "upsample_nearest", "warp_bilinear",
]
