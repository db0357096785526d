"""
Differentiable tensor operations.

Each operation is a ``Function`` subclass with a thin functional wrapper.
Wrappers accept python scalars and numpy arrays wherever a constant operand
makes sense.
"""

from collections.abc import Sequence
from typing import Any, Optional, Union

import numpy as np
from scipy import special

from kmamba.core.exceptions import ShapeMismatchError
from kmamba.engine.tensor import Function, Tensor, as_tensor, unbroadcast

Operand = Union[Tensor, np.ndarray, float, int]


def _pair(a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    tb = as_tensor(b)
    return as_tensor(a, like=tb), tb


# =============================================================================
# Elementwise binary
# =============================================================================

class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * b

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        ga = unbroadcast(grad * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(grad * a.data, b.shape) if b.requires_grad else None
        return ga, gb


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a / b

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        ga = unbroadcast(grad / b.data, a.shape) if a.requires_grad else None
        gb = (
            unbroadcast(-grad * a.data / (b.data * b.data), b.shape)
            if b.requires_grad
            else None
        )
        return ga, gb


def add(a: Operand, b: Operand) -> Tensor:
    return Add.apply(*_pair(a, b))


def sub(a: Operand, b: Operand) -> Tensor:
    return Sub.apply(*_pair(a, b))


def mul(a: Operand, b: Operand) -> Tensor:
    return Mul.apply(*_pair(a, b))


def div(a: Operand, b: Operand) -> Tensor:
    return Div.apply(*_pair(a, b))


# =============================================================================
# Elementwise unary
# =============================================================================

class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (-grad,)


class Power(Function):
    def forward(self, x: np.ndarray, exponent: float) -> np.ndarray:
        self.exponent = exponent
        return np.power(x, exponent)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        x = self.inputs[0].data
        return (grad * self.exponent * np.power(x, self.exponent - 1),)


class Exp(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.exp(x)
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad * self.out,)


class Log(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.log(x)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad / self.inputs[0].data,)


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, np.zeros_like(x))

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = special.expit(x)
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad * self.out * (1.0 - self.out),)


class SiLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.sig = special.expit(x)
        return x * self.sig

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        x = self.inputs[0].data
        return (grad * self.sig * (1.0 + x * (1.0 - self.sig)),)


class Softplus(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.logaddexp(0.0, x).astype(x.dtype, copy=False)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad * special.expit(self.inputs[0].data),)


class Cast(Function):
    def forward(self, x: np.ndarray, dtype: Any) -> np.ndarray:
        self.source = x.dtype
        return x.astype(dtype)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad.astype(self.source),)


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def power(x: Tensor, exponent: float) -> Tensor:
    return Power.apply(x, exponent=float(exponent))


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def silu(x: Tensor) -> Tensor:
    return SiLU.apply(x)


def softplus(x: Tensor) -> Tensor:
    return Softplus.apply(x)


def cast(x: Tensor, dtype: Any) -> Tensor:
    return Cast.apply(x, dtype=np.dtype(dtype))


# =============================================================================
# Reductions
# =============================================================================

def _normalize_axes(axis: Any, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Any, keepdims: bool) -> np.ndarray:
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        return np.asarray(x.sum(axis=self.axes, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        shape = self.inputs[0].shape
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Any, keepdims: bool) -> np.ndarray:
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        self.count = int(np.prod([x.shape[a] for a in self.axes])) if self.axes else 1
        return np.asarray(x.mean(axis=self.axes, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        shape = self.inputs[0].shape
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad / self.count, shape).copy(),)


class Max(Function):
    """Maximum along axes; ties share the gradient equally."""

    def forward(self, x: np.ndarray, axis: Any, keepdims: bool) -> np.ndarray:
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        out = x.max(axis=self.axes, keepdims=True)
        self.mask = x == out
        self.mask = self.mask / self.mask.sum(axis=self.axes, keepdims=True)
        return np.asarray(out if keepdims else np.squeeze(out, axis=self.axes))

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return ((grad * self.mask).astype(self.inputs[0].dtype, copy=False),)


def sum(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def amax(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Max.apply(x, axis=axis, keepdims=keepdims)


# =============================================================================
# Shape manipulation
# =============================================================================

class Reshape(Function):
    def forward(self, x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        return x.reshape(shape)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def forward(self, x: np.ndarray, axes: Optional[tuple[int, ...]]) -> np.ndarray:
        self.axes = axes if axes is not None else tuple(reversed(range(x.ndim)))
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (np.ascontiguousarray(np.transpose(grad, np.argsort(self.axes))),)


class Flip(Function):
    def forward(self, x: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
        self.axes = axes
        return np.ascontiguousarray(np.flip(x, axis=axes))

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (np.ascontiguousarray(np.flip(grad, axis=self.axes)),)


class GetItem(Function):
    def forward(self, x: np.ndarray, index: Any) -> np.ndarray:
        self.index = index
        return np.ascontiguousarray(x[index])

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        full = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        index = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in index):
            full[self.index] += grad
        else:
            # fancy indices may repeat
            np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return tuple(np.split(grad, self.bounds, axis=self.axis))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: Optional[tuple[int, ...]] = None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def flip(x: Tensor, axes: Sequence[int]) -> Tensor:
    return Flip.apply(x, axes=tuple(axes))


def getitem(x: Tensor, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Concatenate along ``axis``.

    Raises:
        ShapeMismatchError: Non-concatenated dimensions differ
    """
    ndim = tensors[0].ndim
    axis = axis % ndim
    reference = [s for i, s in enumerate(tensors[0].shape) if i != axis]
    for t in tensors[1:]:
        other = [s for i, s in enumerate(t.shape) if i != axis]
        if t.ndim != ndim or other != reference:
            raise ShapeMismatchError("concat", tensors[0].shape, t.shape)
    return Concat.apply(*tensors, axis=axis)


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Split ``x`` into consecutive pieces of the given sizes along ``axis``."""
    axis = axis % x.ndim
    if int(np.sum(sizes)) != x.shape[axis]:
        raise ShapeMismatchError("split", x.shape[axis], list(sizes))
    pieces = []
    start = 0
    for size in sizes:
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, start + size)
        pieces.append(getitem(x, tuple(index)))
        start += size
    return pieces


# =============================================================================
# Linear algebra
# =============================================================================

class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.matmul(a, b)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.shape)
        return ga, gb


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Batched matrix product over the last two axes.

    Raises:
        ShapeMismatchError: Inner dimensions differ or rank < 2
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return MatMul.apply(a, b)


# =============================================================================
# Softmax family
# =============================================================================

class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        inner = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


class LogSoftmax(Function):
    def forward(self, x: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        out = x - special.logsumexp(x, axis=axis, keepdims=True)
        self.probs = np.exp(out)
        return out.astype(x.dtype, copy=False)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (grad - self.probs * grad.sum(axis=self.axis, keepdims=True),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis % x.ndim)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis % x.ndim)


def softmax_channels(x: Tensor, channel_axis: int = 0) -> Tensor:
    """
    Per-voxel softmax over the channel axis, max-subtracted.

    Args:
        x: Logits ``[C, ...]`` (or ``[N, C, ...]`` with ``channel_axis=1``)
        channel_axis: Axis holding the classes

    Returns:
        Positive values summing to 1 along ``channel_axis``
    """
    return softmax(x, axis=channel_axis)
