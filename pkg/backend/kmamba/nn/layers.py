"""
Basic layers: convolutions, normalization and conv blocks.

Every layer accepts ``[C, H, W, D]`` or ``[N, C, H, W, D]`` inputs.
Initial values come from an explicit ``numpy.random.Generator``.
"""

import math
from typing import Optional

import numpy as np

from kmamba.core.exceptions import ShapeMismatchError
from kmamba.engine import ops
from kmamba.engine.conv import ConvSpec, IntOrTriple, conv3d, conv_transpose3d
from kmamba.engine.tensor import Tensor, as_tensor
from kmamba.nn.module import Module, Parameter


def default_rng(rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(0)


def uniform_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def channel_axis(x: Tensor) -> int:
    if x.ndim == 4:
        return 0
    if x.ndim == 5:
        return 1
    raise ShapeMismatchError("channel_axis", "[C,H,W,D] or [N,C,H,W,D]", x.shape)


def per_channel(values: Tensor, x: Tensor) -> Tensor:
    """Reshape a ``[C]`` vector to broadcast over channels of ``x``."""
    shape = [1] * x.ndim
    shape[channel_axis(x)] = values.shape[0]
    return values.reshape(tuple(shape))


# =============================================================================
# Convolutions
# =============================================================================

class Conv3d(Module):
    """3D convolution with optional bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: IntOrTriple = 1,
        stride: IntOrTriple = 1,
        padding: IntOrTriple = 0,
        groups: int = 1,
        dilation: IntOrTriple = 1,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        self.spec = ConvSpec(kernel_size=kernel_size, stride=stride, padding=padding,
                             groups=groups, dilation=dilation)
        self.in_channels = in_channels
        self.out_channels = out_channels
        rng = default_rng(rng)
        fan_in = (in_channels // groups) * math.prod(self.spec.kernel_size)
        self.weight = Parameter(
            uniform_init(rng, (out_channels, in_channels // groups, *self.spec.kernel_size), fan_in)
        )
        self.bias: Optional[Parameter] = (
            Parameter(uniform_init(rng, (out_channels,), fan_in)) if bias else None
        )
        # validates group divisibility eagerly
        self.spec.validate_channels(in_channels, self.weight.shape)

    @classmethod
    def same(cls, in_channels: int, out_channels: int, kernel: int, groups: int = 1,
             bias: bool = True, rng: Optional[np.random.Generator] = None) -> "Conv3d":
        """Stride-1 convolution preserving spatial size."""
        return cls(in_channels, out_channels, kernel, 1, (kernel - 1) // 2, groups,
                   bias=bias, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self.spec)

    def extra_repr(self) -> str:
        return (f"{self.in_channels}->{self.out_channels}, k={self.spec.kernel_size}, "
                f"s={self.spec.stride}, g={self.spec.groups}")


class ConvTranspose3d(Module):
    """3D transposed convolution (decoder upsampling)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: IntOrTriple = 2,
        stride: IntOrTriple = 2,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        self.spec = ConvSpec(kernel_size=kernel_size, stride=stride)
        rng = default_rng(rng)
        fan_in = out_channels * math.prod(self.spec.kernel_size)
        self.weight = Parameter(
            uniform_init(rng, (in_channels, out_channels, *self.spec.kernel_size), fan_in)
        )
        self.bias: Optional[Parameter] = (
            Parameter(uniform_init(rng, (out_channels,), fan_in)) if bias else None
        )

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose3d(x, self.weight, self.bias, self.spec)


# =============================================================================
# Normalization
# =============================================================================

class BatchNorm3d(Module):
    """
    Batch normalization over voxels (and batch items) per channel.

    Training mode normalizes with batch statistics and updates the running
    estimates; evaluation mode uses the frozen running estimates.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1) -> None:
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=self.weight.dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=self.weight.dtype))

    def forward(self, x: Tensor) -> Tensor:
        axis = channel_axis(x)
        if x.shape[axis] != self.channels:
            raise ShapeMismatchError("BatchNorm3d", self.channels, x.shape[axis])
        reduce_axes = tuple(i for i in range(x.ndim) if i != axis)
        if self.training:
            mean = x.mean(axis=reduce_axes, keepdims=True)
            centered = x - mean
            var = (centered * centered).mean(axis=reduce_axes, keepdims=True)
            n = x.size // self.channels
            unbiased = var.data.reshape(-1) * (n / (n - 1) if n > 1 else 1.0)
            m = self.momentum
            self.register_buffer(
                "running_mean",
                ((1 - m) * self.running_mean + m * mean.data.reshape(-1)).astype(self.running_mean.dtype),
            )
            self.register_buffer(
                "running_var",
                ((1 - m) * self.running_var + m * unbiased).astype(self.running_var.dtype),
            )
        else:
            shape = [1] * x.ndim
            shape[axis] = self.channels
            mean = as_tensor(self.running_mean.reshape(shape).astype(x.dtype))
            var = as_tensor(self.running_var.reshape(shape).astype(x.dtype))
            centered = x - mean
        normalized = centered * ops.power(var + self.eps, -0.5)
        return normalized * per_channel(self.weight, x) + per_channel(self.bias, x)


class LayerNorm(Module):
    """Normalization over one axis (channels) with learnable affine."""

    def __init__(self, channels: int, axis: int = -1, eps: float = 1e-5) -> None:
        super().__init__()
        self.channels = channels
        self.axis = axis
        self.eps = eps
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        axis = self.axis % x.ndim
        if x.shape[axis] != self.channels:
            raise ShapeMismatchError("LayerNorm", self.channels, x.shape[axis])
        mean = x.mean(axis=axis, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=axis, keepdims=True)
        normalized = centered * ops.power(var + self.eps, -0.5)
        shape = [1] * x.ndim
        shape[axis] = self.channels
        return normalized * self.weight.reshape(tuple(shape)) + self.bias.reshape(tuple(shape))


# =============================================================================
# Blocks
# =============================================================================

class ConvBnReLU(Module):
    """Convolution, batch norm, ReLU."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        stride: int = 1,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        padding = (kernel_size - 1) // 2
        self.conv = Conv3d(in_channels, out_channels, kernel_size, stride, padding, rng=rng)
        self.norm = BatchNorm3d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


class ConvBlock(Module):
    """Two 3x3x3 ConvBnReLU layers; the plain stage used when HSA/BKM are ablated."""

    def __init__(self, in_channels: int, out_channels: int,
                 rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        self.first = ConvBnReLU(in_channels, out_channels, 3, rng=rng)
        self.second = ConvBnReLU(out_channels, out_channels, 3, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


def zero_parameters(module: Module) -> Module:
    """Set every learnable value of ``module`` to zero."""
    for param in module.parameters():
        param.data[...] = 0.0
    return module
