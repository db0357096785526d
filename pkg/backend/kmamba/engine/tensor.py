"""
Dense N-D tensor with reverse-mode differentiation.

A ``Tensor`` wraps a numpy array. Differentiable operations are ``Function``
subclasses: ``apply`` runs ``forward`` on raw arrays, checks the result is
finite and, when any input tracks gradients, records itself as the creator
of the output. ``Tensor.backward`` walks the recorded graph in reverse
topological order.
"""

import contextlib
import logging
from collections.abc import Iterator, Sequence
from typing import Any, Optional, Union

import numpy as np

from kmamba.core.exceptions import GradientContractError, NonFiniteError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_state: dict[str, Any] = {
    "dtype": np.dtype(np.float32),
    "grad_enabled": True,
}


# =============================================================================
# Global modes
# =============================================================================

def get_default_dtype() -> np.dtype:
    """Floating dtype used when constructing tensors from non-float data."""
    return _state["dtype"]


def set_default_dtype(dtype: Union[str, np.dtype, type]) -> None:
    """Set the default floating dtype (float32 or float64)."""
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported default dtype: {resolved}")
    _state["dtype"] = resolved


@contextlib.contextmanager
def default_dtype(dtype: Union[str, np.dtype, type]) -> Iterator[None]:
    """Temporarily switch the default dtype (float64 for gradient checks)."""
    previous = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = previous


def is_grad_enabled() -> bool:
    return bool(_state["grad_enabled"])


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = previous


def check_finite(array: np.ndarray, operation: str) -> None:
    """
    Raise if ``array`` holds NaN or Inf.

    Raises:
        NonFiniteError: At least one value is not finite
    """
    if array.dtype.kind == "f" and not np.isfinite(array).all():
        count = int(array.size - np.count_nonzero(np.isfinite(array)))
        logger.error(f"{operation} produced {count} non-finite values")
        raise NonFiniteError(operation, count)


# =============================================================================
# Function
# =============================================================================

class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays and ``backward``, which
    receives dL/d(output) and returns one gradient (or None) per tensor input.
    Non-tensor arguments travel as keyword arguments to ``forward``.
    """

    def __init__(self, *inputs: "Tensor") -> None:
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__}.backward")

    def needs_grad(self, index: int) -> bool:
        """Whether input ``index`` takes part in differentiation."""
        return self.inputs[index].requires_grad

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """
        Run the operation and record it in the graph.

        Raises:
            NonFiniteError: The forward result contains NaN/Inf
        """
        fn = cls(*inputs)
        out_data = fn.forward(*(t.data for t in inputs), **kwargs)
        check_finite(out_data, cls.__name__)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        out = Tensor(out_data, requires_grad=requires_grad, dtype=out_data.dtype)
        if requires_grad:
            out.creator = fn
        return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so ``grad`` matches ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# =============================================================================
# Tensor
# =============================================================================

class Tensor:
    """
    Dense array with optional gradient tracking.

    Attributes:
        data: Underlying numpy array (contiguous, finite)
        requires_grad: Whether gradients flow to this tensor
        grad: Accumulated gradient for leaves, same shape as data
        creator: Function that produced this tensor (None for leaves)
    """

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[Union[str, np.dtype, type]] = None,
        name: Optional[str] = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            array = np.asarray(data)
            if array.dtype.kind != "f":
                array = array.astype(get_default_dtype())
        else:
            array = np.asarray(data, dtype=dtype)
        self.data: np.ndarray = np.ascontiguousarray(array)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = None
        self.name = name

    # =========================================================================
    # Properties
    # =========================================================================

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    # =========================================================================
    # Conversion
    # =========================================================================

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def astype(self, dtype: Union[str, np.dtype, type]) -> "Tensor":
        from kmamba.engine import ops

        return ops.cast(self, dtype)

    def zero_grad(self) -> None:
        self.grad = None

    # =========================================================================
    # Differentiation
    # =========================================================================

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Repeated calls add to existing gradients.

        Raises:
            GradientContractError: Root is not a single element or does not track gradients
        """
        if self.data.size != 1:
            raise GradientContractError(f"root must be scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GradientContractError("root does not require grad")

        order = self._topological_order()
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            input_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.inputs, input_grads, strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    # =========================================================================
    # Operators
    # =========================================================================

    def __add__(self, other: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        from kmamba.engine import ops

        return ops.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        from kmamba.engine import ops

        return ops.power(self, exponent)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from kmamba.engine import ops

        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from kmamba.engine import ops

        return ops.getitem(self, index)

    # =========================================================================
    # Method forms of common ops
    # =========================================================================

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        from kmamba.engine import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        from kmamba.engine import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        from kmamba.engine import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, tuple(shape))

    def transpose(self, *axes: int) -> "Tensor":
        from kmamba.engine import ops

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, tuple(axes) if axes else None)

    def __repr__(self) -> str:
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        name = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad_flag}{name})"


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    """Wrap scalars/arrays as constant tensors (dtype follows ``like`` when given)."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    if dtype is None and not isinstance(value, np.ndarray):
        dtype = get_default_dtype()
    return Tensor(value, requires_grad=False, dtype=dtype)
