"""
Direct 3D convolution, transposed convolution and pooling.

Convolution is computed by looping over kernel offsets: for each offset the
matching strided window of the padded input is contracted against the
kernel tap. Input and weight gradients reuse the same windows. Transposed
convolution is the input-gradient of a correlation.

Layout: ``[N, C, H, W, D]``; rank-4 ``[C, H, W, D]`` inputs are treated as a
batch of one.
"""

import itertools
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from kmamba.core.exceptions import InvalidSpecError, ShapeMismatchError
from kmamba.engine.tensor import Function, Tensor

Triple = tuple[int, int, int]
IntOrTriple = Union[int, Triple, tuple[int, ...]]


def _triple(value: IntOrTriple) -> Triple:
    if isinstance(value, int):
        return (value, value, value)
    if len(value) != 3:
        raise InvalidSpecError("ConvSpec", f"expected 3 values, got {value}")
    return (int(value[0]), int(value[1]), int(value[2]))


# =============================================================================
# ConvSpec
# =============================================================================

@dataclass(frozen=True)
class ConvSpec:
    """
    Geometry of a 3D convolution.

    Attributes:
        kernel_size: Kernel extent per axis
        stride: Step per axis
        padding: Zero padding per side per axis
        groups: Channel groups (C_in for depthwise)
        dilation: Tap spacing per axis
    """

    kernel_size: Triple = (1, 1, 1)
    stride: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    groups: int = 1
    dilation: Triple = (1, 1, 1)

    def __post_init__(self) -> None:
        for field_name in ("kernel_size", "stride", "padding", "dilation"):
            object.__setattr__(self, field_name, _triple(getattr(self, field_name)))
        if min(self.kernel_size) < 1:
            raise InvalidSpecError("ConvSpec", "kernel size must be >= 1")
        if min(self.stride) < 1 or min(self.dilation) < 1:
            raise InvalidSpecError("ConvSpec", "stride and dilation must be >= 1")
        if min(self.padding) < 0:
            raise InvalidSpecError("ConvSpec", "padding must be >= 0")
        if self.groups < 1:
            raise InvalidSpecError("ConvSpec", "groups must be >= 1")

    @classmethod
    def pointwise(cls) -> "ConvSpec":
        return cls()

    @classmethod
    def same(cls, kernel: int, groups: int = 1, dilation: int = 1) -> "ConvSpec":
        """Odd cubic kernel with padding that preserves spatial size at stride 1."""
        if kernel % 2 == 0:
            raise InvalidSpecError("ConvSpec", f"same padding needs an odd kernel, got {kernel}")
        pad = dilation * (kernel - 1) // 2
        return cls(kernel_size=(kernel,) * 3, padding=(pad,) * 3, groups=groups,
                   dilation=(dilation,) * 3)

    def output_size(self, size: tuple[int, ...]) -> Triple:
        """
        Output spatial size for an input spatial size.

        Raises:
            InvalidSpecError: Any output dimension would be < 1
        """
        out = []
        for n, k, s, p, d in zip(size, self.kernel_size, self.stride, self.padding,
                                 self.dilation, strict=True):
            o = (n + 2 * p - d * (k - 1) - 1) // s + 1
            if o < 1:
                raise InvalidSpecError(
                    "ConvSpec", f"input {tuple(size)} yields empty output for {self}"
                )
            out.append(o)
        return (out[0], out[1], out[2])

    def transposed_output_size(self, size: tuple[int, ...]) -> Triple:
        out = []
        for n, k, s, p, d in zip(size, self.kernel_size, self.stride, self.padding,
                                 self.dilation, strict=True):
            o = (n - 1) * s - 2 * p + d * (k - 1) + 1
            if o < 1:
                raise InvalidSpecError("ConvSpec", f"transposed output empty for {tuple(size)}")
            out.append(o)
        return (out[0], out[1], out[2])

    def validate_channels(self, c_in: int, weight_shape: tuple[int, ...]) -> None:
        """
        Check a correlation weight ``[C_out, C_in/groups, kH, kW, kD]``.

        Raises:
            ShapeMismatchError: Weight inconsistent with input channels or groups
        """
        if len(weight_shape) != 5:
            raise ShapeMismatchError("conv3d weight", "rank 5", weight_shape)
        c_out, c_in_g = weight_shape[:2]
        if tuple(weight_shape[2:]) != self.kernel_size:
            raise ShapeMismatchError("conv3d kernel", self.kernel_size, tuple(weight_shape[2:]))
        if c_in % self.groups or c_out % self.groups:
            raise ShapeMismatchError(
                "conv3d groups", f"channels divisible by {self.groups}", (c_in, c_out)
            )
        if c_in_g * self.groups != c_in:
            raise ShapeMismatchError("conv3d input channels", c_in_g * self.groups, c_in)


# =============================================================================
# Kernel-offset loops
# =============================================================================

def _offsets(spec: ConvSpec) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(k) for k in spec.kernel_size))


def _window(spec: ConvSpec, offset: tuple[int, ...], out_size: Triple) -> tuple[slice, ...]:
    return tuple(
        slice(o * d, o * d + s * (n - 1) + 1, s)
        for o, d, s, n in zip(offset, spec.dilation, spec.stride, out_size, strict=True)
    )


def _correlate(xp: np.ndarray, w: np.ndarray, spec: ConvSpec, out_size: Triple) -> np.ndarray:
    """Forward correlation of a padded input ``[N, C, ...]`` with ``[O, C/G, k...]``."""
    n, c = xp.shape[:2]
    o, c_g = w.shape[:2]
    g = spec.groups
    out = np.zeros((n, o, *out_size), dtype=np.result_type(xp, w))
    for offset in _offsets(spec):
        xs = xp[(slice(None), slice(None), *_window(spec, offset, out_size))]
        tap = w[(slice(None), slice(None), *offset)]
        if g == 1:
            out += np.einsum("nchwd,oc->nohwd", xs, tap, optimize=True)
        elif c_g == 1 and o == c:
            out += xs * tap[:, 0][None, :, None, None, None]
        else:
            xs_g = xs.reshape(n, g, c_g, *out_size)
            tap_g = tap.reshape(g, o // g, c_g)
            out += np.einsum("ngchwd,goc->ngohwd", xs_g, tap_g, optimize=True).reshape(
                n, o, *out_size
            )
    return out


def _correlate_input_grad(
    grad: np.ndarray, w: np.ndarray, spec: ConvSpec, padded_shape: tuple[int, ...]
) -> np.ndarray:
    """Gradient of ``_correlate`` w.r.t. its padded input."""
    n, o = grad.shape[:2]
    out_size = grad.shape[2:]
    c_g = w.shape[1]
    g = spec.groups
    c = c_g * g
    gx = np.zeros((n, c, *padded_shape), dtype=np.result_type(grad, w))
    for offset in _offsets(spec):
        window = (slice(None), slice(None), *_window(spec, offset, out_size))
        tap = w[(slice(None), slice(None), *offset)]
        if g == 1:
            gx[window] += np.einsum("nohwd,oc->nchwd", grad, tap, optimize=True)
        elif c_g == 1 and o == c:
            gx[window] += grad * tap[:, 0][None, :, None, None, None]
        else:
            grad_g = grad.reshape(n, g, o // g, *out_size)
            tap_g = tap.reshape(g, o // g, c_g)
            gx[window] += np.einsum("ngohwd,goc->ngchwd", grad_g, tap_g, optimize=True).reshape(
                n, c, *out_size
            )
    return gx


def _correlate_weight_grad(
    grad: np.ndarray, xp: np.ndarray, spec: ConvSpec, weight_shape: tuple[int, ...]
) -> np.ndarray:
    """Gradient of ``_correlate`` w.r.t. its weight."""
    n, o = grad.shape[:2]
    out_size = grad.shape[2:]
    c_g = weight_shape[1]
    g = spec.groups
    c = c_g * g
    gw = np.zeros(weight_shape, dtype=np.result_type(grad, xp))
    for offset in _offsets(spec):
        xs = xp[(slice(None), slice(None), *_window(spec, offset, out_size))]
        index = (slice(None), slice(None), *offset)
        if g == 1:
            gw[index] = np.einsum("nohwd,nchwd->oc", grad, xs, optimize=True)
        elif c_g == 1 and o == c:
            gw[index] = (grad * xs).sum(axis=(0, 2, 3, 4))[:, None]
        else:
            grad_g = grad.reshape(n, g, o // g, *out_size)
            xs_g = xs.reshape(n, g, c_g, *out_size)
            gw[index] = np.einsum("ngohwd,ngchwd->goc", grad_g, xs_g, optimize=True).reshape(
                o, c_g
            )
    return gw


def _pad(x: np.ndarray, padding: Triple) -> np.ndarray:
    if not any(padding):
        return x
    return np.pad(x, [(0, 0), (0, 0), *[(p, p) for p in padding]])


def _crop(x: np.ndarray, padding: Triple) -> np.ndarray:
    if not any(padding):
        return x
    index = tuple(slice(p, x.shape[2 + i] - p) for i, p in enumerate(padding))
    return np.ascontiguousarray(x[(slice(None), slice(None), *index)])


# =============================================================================
# Functions
# =============================================================================

class Conv3dFn(Function):
    def forward(self, x: np.ndarray, w: np.ndarray, *bias: np.ndarray, spec: ConvSpec) -> np.ndarray:
        self.spec = spec
        self.xp = _pad(x, spec.padding)
        out_size = spec.output_size(x.shape[2:])
        out = _correlate(self.xp, w, spec, out_size)
        if bias:
            out += bias[0].reshape(1, -1, 1, 1, 1)
        return out

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        spec = self.spec
        x, w = self.inputs[0], self.inputs[1]
        gx = gw = None
        if x.requires_grad:
            gx = _crop(_correlate_input_grad(grad, w.data, spec, self.xp.shape[2:]), spec.padding)
        if w.requires_grad:
            gw = _correlate_weight_grad(grad, self.xp, spec, w.shape)
        grads: list[Optional[np.ndarray]] = [gx, gw]
        if len(self.inputs) == 3:
            grads.append(grad.sum(axis=(0, 2, 3, 4)) if self.inputs[2].requires_grad else None)
        return tuple(grads)


class ConvTranspose3dFn(Function):
    """Weight layout ``[C_in, C_out/groups, kH, kW, kD]``."""

    def forward(self, x: np.ndarray, w: np.ndarray, *bias: np.ndarray, spec: ConvSpec) -> np.ndarray:
        self.spec = spec
        full = spec.transposed_output_size(x.shape[2:])
        padded = tuple(f + 2 * p for f, p in zip(full, spec.padding, strict=True))
        out = _crop(_correlate_input_grad(x, w, spec, padded), spec.padding)
        if bias:
            out += bias[0].reshape(1, -1, 1, 1, 1)
        return out

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        spec = self.spec
        x, w = self.inputs[0], self.inputs[1]
        gp = _pad(grad, spec.padding)
        gx = _correlate(gp, w.data, spec, x.shape[2:]) if x.requires_grad else None
        gw = _correlate_weight_grad(x.data, gp, spec, w.shape) if w.requires_grad else None
        grads: list[Optional[np.ndarray]] = [gx, gw]
        if len(self.inputs) == 3:
            grads.append(grad.sum(axis=(0, 2, 3, 4)) if self.inputs[2].requires_grad else None)
        return tuple(grads)


# =============================================================================
# Functional API
# =============================================================================

def _batched(x: Tensor, op: str) -> tuple[Tensor, bool]:
    if x.ndim == 4:
        return x.reshape(1, *x.shape), True
    if x.ndim == 5:
        return x, False
    raise ShapeMismatchError(op, "[C,H,W,D] or [N,C,H,W,D]", x.shape)


def conv3d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, spec: Optional[ConvSpec] = None
) -> Tensor:
    """
    Direct 3D cross-correlation.

    Args:
        x: Input ``[C_in, H, W, D]`` or ``[N, C_in, H, W, D]``
        weight: ``[C_out, C_in/groups, kH, kW, kD]``
        bias: Optional ``[C_out]``
        spec: Geometry (pointwise when omitted)

    Returns:
        ``[(N,) C_out, H', W', D']``

    Raises:
        ShapeMismatchError: Weight/bias inconsistent with the input
        InvalidSpecError: Output would be empty
    """
    spec = spec or ConvSpec.pointwise()
    xb, squeeze = _batched(x, "conv3d")
    spec.validate_channels(xb.shape[1], weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatchError("conv3d bias", (weight.shape[0],), bias.shape)
    spec.output_size(xb.shape[2:])
    inputs = (xb, weight) if bias is None else (xb, weight, bias)
    out = Conv3dFn.apply(*inputs, spec=spec)
    return out.reshape(out.shape[1:]) if squeeze else out


def conv_transpose3d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, spec: Optional[ConvSpec] = None
) -> Tensor:
    """
    3D transposed convolution (upsampling by ``spec.stride``).

    Raises:
        ShapeMismatchError: Weight inconsistent with the input
    """
    spec = spec or ConvSpec.pointwise()
    xb, squeeze = _batched(x, "conv_transpose3d")
    if weight.ndim != 5 or weight.shape[0] != xb.shape[1] or weight.shape[0] % spec.groups:
        raise ShapeMismatchError("conv_transpose3d weight", f"[{xb.shape[1]}, ...]", weight.shape)
    if tuple(weight.shape[2:]) != spec.kernel_size:
        raise ShapeMismatchError("conv_transpose3d kernel", spec.kernel_size, weight.shape[2:])
    out_channels = weight.shape[1] * spec.groups
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeMismatchError("conv_transpose3d bias", (out_channels,), bias.shape)
    inputs = (xb, weight) if bias is None else (xb, weight, bias)
    out = ConvTranspose3dFn.apply(*inputs, spec=spec)
    return out.reshape(out.shape[1:]) if squeeze else out


def avg_pool3d(x: Tensor, factor: IntOrTriple) -> Tensor:
    """
    Non-overlapping average pooling with kernel = stride = ``factor``.

    Raises:
        InvalidSpecError: Factor below one, or spatial size not divisible by it
    """
    f = _triple(factor)
    spatial = x.shape[-3:]
    if min(f) < 1:
        raise InvalidSpecError("avg_pool3d", f"factor {f} must be at least 1")
    if any(n % k for n, k in zip(spatial, f, strict=True)):
        raise InvalidSpecError("avg_pool3d", f"size {spatial} not divisible by {f}")
    if f == (1, 1, 1):
        return x
    lead = x.shape[:-3]
    blocked = x.reshape(*lead, spatial[0] // f[0], f[0], spatial[1] // f[1], f[1],
                        spatial[2] // f[2], f[2])
    k = len(lead)
    return blocked.mean(axis=(k + 1, k + 3, k + 5))


def global_avg_pool3d(x: Tensor) -> Tensor:
    """Mean over the three trailing spatial axes, kept as size-1 dims."""
    return x.mean(axis=(-3, -2, -1), keepdims=True)
