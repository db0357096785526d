"""Tensor engine: dense arrays, reverse-mode differentiation and 3D operators."""

from kmamba.engine.conv import ConvSpec, avg_pool3d, conv3d, conv_transpose3d, global_avg_pool3d
from kmamba.engine.gradcheck import GradcheckResult, gradcheck
from kmamba.engine.ops import softmax_channels
from kmamba.engine.resample import resample_trilinear
from kmamba.engine.tensor import (
    Function,
    Tensor,
    default_dtype,
    get_default_dtype,
    no_grad,
    set_default_dtype,
)

__all__ = [
    "ConvSpec",
    "Function",
    "GradcheckResult",
    "Tensor",
    "avg_pool3d",
    "conv3d",
    "conv_transpose3d",
    "default_dtype",
    "get_default_dtype",
    "global_avg_pool3d",
    "gradcheck",
    "no_grad",
    "resample_trilinear",
    "set_default_dtype",
    "softmax_channels",
]
