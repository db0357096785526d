"""
Kolmogorov-Arnold operator with cubic B-spline univariate functions.

For an input vector x of width P the layer computes::

    h_q = Σ_p ψ_{q,p}(x_p)              q = 1..Q
    y_o = Σ_q φ_{o,q}(h_q) + Σ_p W_{o,p} b(x_p)

Every ψ and φ is a spline over one shared knot grid; ``b`` is the base
activation of the linear bypass. No activation sits between the two spline
stages. Inputs outside the grid are extended linearly from the boundary
segment, so values and slopes stay continuous everywhere.
"""

import logging
from typing import Callable, Literal, Optional, Union

import numpy as np

from kmamba.core.exceptions import InvalidGridError, ShapeMismatchError
from kmamba.engine import ops
from kmamba.engine.tensor import Function, Tensor
from kmamba.nn.layers import default_rng, uniform_init
from kmamba.nn.module import Module, Parameter

logger = logging.getLogger(__name__)

BaseActivation = Literal["silu", "linear"]


# =============================================================================
# Grids
# =============================================================================

def uniform_grid(grid_size: int, grid_range: float) -> np.ndarray:
    """``grid_size`` equal intervals over ``[-grid_range, grid_range]``."""
    if grid_size < 1 or grid_range <= 0:
        raise InvalidGridError(f"grid_size={grid_size}, grid_range={grid_range}")
    return np.linspace(-grid_range, grid_range, grid_size + 1)


def validate_grid(grid: np.ndarray, order: int) -> np.ndarray:
    """
    Check a knot grid.

    Raises:
        InvalidGridError: Order < 1, too few knots or knots not strictly increasing
    """
    grid = np.asarray(grid, dtype=np.float64)
    if order < 1:
        raise InvalidGridError(f"spline order must be >= 1, got {order}")
    if grid.ndim != 1 or grid.size < order + 2:
        raise InvalidGridError(f"need at least {order + 2} knots, got {grid.size}")
    if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        raise InvalidGridError("knots must be finite and strictly increasing")
    return grid


def extend_grid(grid: np.ndarray, order: int) -> np.ndarray:
    """Pad ``order`` knots on each side with the spacing of the edge interval."""
    grid = validate_grid(grid, order)
    left = grid[1] - grid[0]
    right = grid[-1] - grid[-2]
    return np.concatenate([
        grid[0] - left * np.arange(order, 0, -1),
        grid,
        grid[-1] + right * np.arange(1, order + 1),
    ])


def num_basis(grid: np.ndarray, order: int) -> int:
    return len(grid) - 1 + order


def greville_abscissae(grid: np.ndarray, order: int) -> np.ndarray:
    """Coefficients that make a spline reproduce f(x) = x on the grid."""
    knots = extend_grid(grid, order)
    count = num_basis(grid, order)
    return np.array([knots[i + 1:i + order + 1].mean() for i in range(count)])


# =============================================================================
# Basis evaluation
# =============================================================================

def bspline_basis(x: np.ndarray, knots: np.ndarray, order: int) -> np.ndarray:
    """
    Cox-de Boor recursion.

    Args:
        x: Sample points, any shape
        knots: Full (extended) knot vector
        order: Polynomial degree

    Returns:
        ``[*x.shape, len(knots) - order - 1]`` basis values
    """
    t = knots
    xs = np.asarray(x, dtype=np.float64)[..., None]
    bases = ((xs >= t[:-1]) & (xs < t[1:])).astype(np.float64)
    for k in range(1, order + 1):
        bases = (
            (xs - t[:-k - 1]) / (t[k:-1] - t[:-k - 1]) * bases[..., :-1]
            + (t[k + 1:] - xs) / (t[k + 1:] - t[1:-k]) * bases[..., 1:]
        )
    return bases


def bspline_basis_derivative(x: np.ndarray, knots: np.ndarray, order: int) -> np.ndarray:
    """d/dx of ``bspline_basis``, same layout."""
    t = knots
    lower = bspline_basis(x, knots, order - 1)
    count = len(t) - order - 1
    i = np.arange(count)
    left = order / (t[i + order] - t[i])
    right = order / (t[i + order + 1] - t[i + 1])
    return left * lower[..., :-1] - right * lower[..., 1:]


def spline_basis(x: np.ndarray, grid: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Basis values and slopes with linear extension outside the grid.

    Returns:
        (values, slopes), each ``[*x.shape, num_basis]``
    """
    knots = extend_grid(grid, order)
    x = np.asarray(x, dtype=np.float64)
    clipped = np.clip(x, grid[0], grid[-1])
    slopes = bspline_basis_derivative(clipped, knots, order)
    values = bspline_basis(clipped, knots, order) + slopes * (x - clipped)[..., None]
    return values, slopes


def eval_univariate(
    x: Union[float, np.ndarray], coeffs: np.ndarray, grid: np.ndarray, order: int = 3
) -> Union[float, np.ndarray]:
    """
    Evaluate one spline ``Σ_i c_i B_i(x)``.

    Args:
        x: Scalar or array of sample points
        coeffs: ``[num_basis]`` coefficients
        grid: Strictly increasing knots over the grid range
        order: Polynomial degree

    Raises:
        InvalidGridError: Malformed grid or wrong coefficient count
    """
    grid = validate_grid(grid, order)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (num_basis(grid, order),):
        raise InvalidGridError(
            f"expected {num_basis(grid, order)} coefficients, got {coeffs.shape}"
        )
    values, _ = spline_basis(np.asarray(x), grid, order)
    result = values @ coeffs
    return float(result) if np.ndim(x) == 0 else result


def fit_coefficients(
    fn: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    order: int = 3,
    samples: int = 512,
) -> np.ndarray:
    """Least-squares spline coefficients for ``fn`` sampled over the grid range."""
    grid = validate_grid(grid, order)
    xs = np.linspace(grid[0], grid[-1], samples)
    values, _ = spline_basis(xs, grid, order)
    coeffs, *_ = np.linalg.lstsq(values, fn(xs), rcond=None)
    return coeffs


class SplineBasisFn(Function):
    """``[n, P]`` -> ``[n, P, num_basis]``; the gradient flows through the slopes."""

    def forward(self, x: np.ndarray, grid: np.ndarray, order: int) -> np.ndarray:
        values, slopes = spline_basis(x, grid, order)
        self.slopes = slopes
        return values.astype(x.dtype)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        (x,) = self.inputs
        return ((grad * self.slopes).sum(axis=-1).astype(x.dtype),)


# =============================================================================
# Layer
# =============================================================================

class KanLayer(Module):
    """
    Two-stage spline network applied over the last axis.

    Args:
        in_dim: P, width of the input vectors
        hidden_width: Q, number of inner sums
        out_dim: Output width (defaults to P)
        grid_size: Number of grid intervals
        grid_range: Grid covers ``[-grid_range, grid_range]``
        order: Spline degree
        base_activation: ``silu`` or ``linear`` for the bypass
        rng: Initializer randomness

    Attributes:
        inner_coeffs: ``[Q, P, num_basis]`` coefficients of ψ
        outer_coeffs: ``[P_out, Q, num_basis]`` coefficients of φ, linear at init
        base_weight: ``[P_out, P]`` bypass weights
    """

    def __init__(
        self,
        in_dim: int,
        hidden_width: int = 64,
        out_dim: Optional[int] = None,
        grid_size: int = 8,
        grid_range: float = 3.0,
        order: int = 3,
        base_activation: BaseActivation = "silu",
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        if base_activation not in ("silu", "linear"):
            raise InvalidGridError(f"unknown base activation {base_activation!r}")
        rng = default_rng(rng)
        out_dim = in_dim if out_dim is None else out_dim
        self.in_dim, self.hidden_width, self.out_dim = in_dim, hidden_width, out_dim
        self.order = order
        self.base_activation: BaseActivation = base_activation
        self.grid = validate_grid(uniform_grid(grid_size, grid_range), order)
        nb = num_basis(self.grid, order)

        self.inner_coeffs = Parameter(
            rng.normal(0.0, 0.1 / np.sqrt(in_dim), size=(hidden_width, in_dim, nb))
        )
        mixing = uniform_init(rng, (out_dim, hidden_width), hidden_width)
        self.outer_coeffs = Parameter(
            mixing[:, :, None] * greville_abscissae(self.grid, order)[None, None, :]
        )
        self.base_weight = Parameter(uniform_init(rng, (out_dim, in_dim), in_dim))

    @property
    def basis_count(self) -> int:
        return num_basis(self.grid, self.order)

    def _activate(self, x: Tensor) -> Tensor:
        return ops.silu(x) if self.base_activation == "silu" else x

    def inner(self, x: Tensor) -> Tensor:
        """``[n, P]`` -> hidden sums ``[n, Q]``."""
        n, nb = x.shape[0], self.basis_count
        basis = SplineBasisFn.apply(x, grid=self.grid, order=self.order)
        weights = self.inner_coeffs.reshape(self.hidden_width, self.in_dim * nb)
        return ops.matmul(basis.reshape(n, self.in_dim * nb), weights.transpose(1, 0))

    def outer(self, h: Tensor) -> Tensor:
        """Hidden sums ``[n, Q]`` -> ``[n, P_out]``."""
        n, nb = h.shape[0], self.basis_count
        basis = SplineBasisFn.apply(h, grid=self.grid, order=self.order)
        weights = self.outer_coeffs.reshape(self.out_dim, self.hidden_width * nb)
        return ops.matmul(basis.reshape(n, self.hidden_width * nb), weights.transpose(1, 0))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatchError("KanLayer", self.in_dim, x.shape[-1])
        lead = x.shape[:-1]
        n = int(np.prod(lead)) if lead else 1
        flat = x.reshape(n, self.in_dim)
        spline = self.outer(self.inner(flat))
        bypass = ops.matmul(self._activate(flat), self.base_weight.transpose(1, 0))
        return (spline + bypass).reshape(*lead, self.out_dim)

    def extra_repr(self) -> str:
        return (f"P={self.in_dim}, Q={self.hidden_width}, out={self.out_dim}, "
                f"grid={len(self.grid) - 1}, order={self.order}")


def kan_forward(x: Tensor, layer: KanLayer) -> Tensor:
    """Apply ``layer`` over the trailing axis of ``x``, keeping leading axes."""
    return layer(x)
