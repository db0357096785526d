"""
Diagonal linear state-space scan over flattened volumes.

Recurrence, in scan order::

    s_t = Λ s_{t-1} + Γ u_t,   s_0 = 0
    w_t = τ s_t

Λ is diagonal with entries λ_i = exp(-softplus(lambda_raw_i)) in (0, 1).
A backward-direction scan runs the same recurrence over the reversed
sequence and returns outputs in the original order.

Two forward paths share one backward:
- ``naive``: one Python step per element, the reference recurrence
- ``chunked``: chunks of the sequence, each projected then filtered per
  state with ``scipy.signal.lfilter`` carrying the boundary state
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import signal

from kmamba.core.exceptions import InvalidScanOrderError, ScanDimensionError, ShapeMismatchError
from kmamba.engine import ops
from kmamba.engine.tensor import Function, Tensor, as_tensor
from kmamba.nn.module import Module, Parameter

logger = logging.getLogger(__name__)

Direction = Literal["forward", "backward"]
ScanMode = Literal["naive", "chunked"]


# =============================================================================
# Scan order
# =============================================================================

@dataclass(frozen=True)
class ScanOrder:
    """
    How a volume becomes a sequence.

    Attributes:
        permutation: Spatial axes (0=H, 1=W, 2=D) from slowest to fastest varying
        reversed_axes: Per spatial axis, traverse from the far end
    """

    permutation: tuple[int, int, int] = (0, 1, 2)
    reversed_axes: tuple[bool, bool, bool] = (False, False, False)

    def __post_init__(self) -> None:
        if sorted(self.permutation) != [0, 1, 2] or len(self.permutation) != 3:
            raise InvalidScanOrderError(self.permutation)
        if len(self.reversed_axes) != 3:
            raise InvalidScanOrderError(self.reversed_axes)

    @classmethod
    def row_major(cls) -> "ScanOrder":
        return cls()

    @classmethod
    def full_reversal(cls) -> "ScanOrder":
        """Row-major order read back to front."""
        return cls((0, 1, 2), (True, True, True))


def flatten_volume(x: Tensor, order: ScanOrder) -> Tensor:
    """
    Volume to sequence.

    Args:
        x: ``[C, H, W, D]`` or ``[N, C, H, W, D]``
        order: Traversal order

    Returns:
        ``[T, C]`` (or ``[N, T, C]``) with T = H·W·D
    """
    if x.ndim not in (4, 5):
        raise ShapeMismatchError("flatten_volume", "[C,H,W,D] or [N,C,H,W,D]", x.shape)
    batched = x.ndim == 5
    xb = x if batched else x.reshape(1, *x.shape)
    flips = [2 + i for i, rev in enumerate(order.reversed_axes) if rev]
    if flips:
        xb = ops.flip(xb, flips)
    axes = (0, *(2 + p for p in order.permutation), 1)
    seq = xb.transpose(axes)
    n, c = xb.shape[0], xb.shape[1]
    seq = seq.reshape(n, int(np.prod(xb.shape[2:])), c)
    return seq if batched else seq.reshape(seq.shape[1:])


def unflatten_volume(seq: Tensor, order: ScanOrder, spatial: tuple[int, int, int]) -> Tensor:
    """Inverse of ``flatten_volume``: ``[(N,) T, C]`` back to ``[(N,) C, H, W, D]``."""
    batched = seq.ndim == 3
    sb = seq if batched else seq.reshape(1, *seq.shape)
    n, t, c = sb.shape
    if t != int(np.prod(spatial)):
        raise ShapeMismatchError("unflatten_volume", int(np.prod(spatial)), t)
    permuted = tuple(spatial[p] for p in order.permutation)
    vol = sb.reshape(n, *permuted, c)
    # axis k of vol holds spatial axis permutation[k-1]
    inverse = [0, 4, 0, 0, 0]
    for k, p in enumerate(order.permutation):
        inverse[2 + p] = 1 + k
    vol = vol.transpose(tuple(inverse))
    flips = [2 + i for i, rev in enumerate(order.reversed_axes) if rev]
    if flips:
        vol = ops.flip(vol, flips)
    return vol if batched else vol.reshape(vol.shape[1:])


# =============================================================================
# Linear recurrence
# =============================================================================

def _filter_states(v: np.ndarray, lam: np.ndarray, initial: Optional[np.ndarray]) -> np.ndarray:
    """
    Per-state first-order filter ``y_t = v_t + λ y_{t-1}`` along axis 1.

    Args:
        v: ``[B, L, S]``
        lam: ``[S]``
        initial: ``[B, S]`` state before the first element, or None for zero
    """
    out = np.empty_like(v)
    for i, li in enumerate(lam):
        zi = None if initial is None else (li * initial[:, i])[:, None]
        if zi is None:
            out[:, :, i] = signal.lfilter([1.0], [1.0, -li], v[:, :, i], axis=1)
        else:
            out[:, :, i], _ = signal.lfilter([1.0], [1.0, -li], v[:, :, i], axis=1, zi=zi)
    return out


class LinearScanFn(Function):
    """
    Inputs: u ``[B, T, D_in]``, lam ``[S]``, gamma ``[S, D_in]``, tau ``[D_out, S]``.
    """

    def forward(
        self,
        u: np.ndarray,
        lam: np.ndarray,
        gamma: np.ndarray,
        tau: np.ndarray,
        reverse: bool,
        mode: ScanMode,
        chunk: int,
    ) -> np.ndarray:
        self.reverse = reverse
        dtype = np.result_type(u, lam, gamma, tau)
        work = np.float64
        us = (u[:, ::-1] if reverse else u).astype(work)
        lam64 = lam.astype(work)
        b, t, _ = us.shape
        states = np.empty((b, t, lam.shape[0]), dtype=work)

        if mode == "naive":
            s = np.zeros((b, lam.shape[0]), dtype=work)
            g64 = gamma.astype(work)
            for step in range(t):
                s = lam64 * s + us[:, step] @ g64.T
                states[:, step] = s
        else:
            carry: Optional[np.ndarray] = None
            for start in range(0, t, chunk):
                stop = min(start + chunk, t)
                v = us[:, start:stop] @ gamma.astype(work).T
                states[:, start:stop] = _filter_states(v, lam64, carry)
                carry = states[:, stop - 1]

        self.states = states
        self.us = us
        self.lam64 = lam64
        w = states @ tau.astype(work).T
        if reverse:
            w = w[:, ::-1]
        return np.ascontiguousarray(w, dtype=dtype)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        u_t, lam_t, gamma_t, tau_t = self.inputs
        work = np.float64
        g = (grad[:, ::-1] if self.reverse else grad).astype(work)
        states = self.states

        g_tau = np.einsum("bto,bts->os", g, states, optimize=True)
        direct = g @ tau_t.data.astype(work)
        # adjoint a_t = direct_t + λ a_{t+1}
        adjoint = _filter_states(direct[:, ::-1], self.lam64, None)[:, ::-1]

        previous = np.zeros_like(states)
        previous[:, 1:] = states[:, :-1]
        g_lam = np.einsum("bts,bts->s", adjoint, previous, optimize=True)
        g_gamma = np.einsum("bts,btd->sd", adjoint, self.us, optimize=True)
        g_u = adjoint @ gamma_t.data.astype(work)
        if self.reverse:
            g_u = g_u[:, ::-1]

        return (
            np.ascontiguousarray(g_u, dtype=u_t.dtype) if u_t.requires_grad else None,
            g_lam.astype(lam_t.dtype) if lam_t.requires_grad else None,
            g_gamma.astype(gamma_t.dtype) if gamma_t.requires_grad else None,
            g_tau.astype(tau_t.dtype) if tau_t.requires_grad else None,
        )


# =============================================================================
# Parameters
# =============================================================================

class SsmParameters(Module):
    """
    Learnable (Λ, Γ, τ) of one scan direction.

    Attributes:
        lambda_raw: ``[D_state]``, λ = exp(-softplus(lambda_raw))
        gamma: Input matrix ``[D_state, D_in]``
        tau: Output matrix ``[D_out, D_state]``
        direction: ``forward`` or ``backward``
    """

    def __init__(
        self,
        d_in: int,
        d_state: int,
        d_out: Optional[int] = None,
        direction: Direction = "forward",
        rng: Optional[np.random.Generator] = None,
        lambda_range: tuple[float, float] = (0.5, 0.95),
    ) -> None:
        super().__init__()
        if direction not in ("forward", "backward"):
            raise InvalidScanOrderError(direction)
        rng = rng if rng is not None else np.random.default_rng(0)
        d_out = d_in if d_out is None else d_out
        self.d_in, self.d_state, self.d_out = d_in, d_state, d_out
        self.direction: Direction = direction
        lam = rng.uniform(lambda_range[0], lambda_range[1], size=d_state)
        self.lambda_raw = Parameter(np.log(1.0 / lam - 1.0))
        self.gamma = Parameter(rng.standard_normal((d_state, d_in)) / np.sqrt(d_in))
        self.tau = Parameter(rng.standard_normal((d_out, d_state)) / np.sqrt(d_state))
        self.forced_lambda: Optional[np.ndarray] = None

    def force_lambda(self, values: Optional[np.ndarray]) -> None:
        """Test hook: replace λ by fixed values (bypasses the stability map)."""
        self.forced_lambda = None if values is None else np.broadcast_to(
            np.asarray(values, dtype=self.lambda_raw.dtype), (self.d_state,)
        ).copy()

    def effective_lambda(self) -> Tensor:
        """Diagonal of Λ."""
        if self.forced_lambda is not None:
            return as_tensor(self.forced_lambda.astype(self.lambda_raw.dtype))
        return ops.exp(ops.neg(ops.softplus(self.lambda_raw)))

    def stability_bound(self, input_bound: float) -> float:
        """Upper bound on |w_t| for |u_t| <= input_bound."""
        lam_max = float(self.effective_lambda().data.max())
        norm_tau = float(np.linalg.norm(self.tau.data, 2))
        norm_gamma = float(np.linalg.norm(self.gamma.data, 2))
        return norm_tau * norm_gamma * input_bound * np.sqrt(self.d_in) / (1.0 - lam_max)

    def extra_repr(self) -> str:
        return f"d_in={self.d_in}, d_state={self.d_state}, d_out={self.d_out}, {self.direction}"


def _scan(u: Tensor, p: SsmParameters, mode: ScanMode, chunk: int) -> Tensor:
    if u.ndim not in (2, 3):
        raise ShapeMismatchError("scan", "[T, D_in] or [B, T, D_in]", u.shape)
    if u.shape[-1] != p.d_in:
        raise ScanDimensionError("input width", p.d_in, u.shape[-1])
    if u.shape[-2] < 1:
        raise ScanDimensionError("length", 1, u.shape[-2])
    if chunk < 1:
        raise ScanDimensionError("chunk", 1, chunk)
    batched = u.ndim == 3
    ub = u if batched else u.reshape(1, *u.shape)
    out = LinearScanFn.apply(
        ub, p.effective_lambda(), p.gamma, p.tau,
        reverse=p.direction == "backward", mode=mode, chunk=int(chunk),
    )
    return out if batched else out.reshape(out.shape[1:])


def scan_naive(u: Tensor, p: SsmParameters) -> Tensor:
    """
    Reference recurrence, one step at a time.

    Args:
        u: ``[T, D_in]`` (or batched ``[B, T, D_in]``)
        p: Scan parameters

    Returns:
        ``[T, D_out]`` outputs in the original sequence order

    Raises:
        ScanDimensionError: Input width differs from Γ's
    """
    return _scan(u, p, "naive", 1)


def scan_chunked(u: Tensor, p: SsmParameters, chunk: int = 256) -> Tensor:
    """Same contract as ``scan_naive``; processes ``chunk`` steps at a time."""
    return _scan(u, p, "chunked", chunk)


# =============================================================================
# Volume branch
# =============================================================================

class SsmBranch(Module):
    """Flatten a volume, scan it in one direction, restore the volume layout."""

    def __init__(
        self,
        channels: int,
        d_state: int,
        direction: Direction,
        order: Optional[ScanOrder] = None,
        chunk: int = 256,
        mode: ScanMode = "chunked",
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        self.params = SsmParameters(channels, d_state, channels, direction, rng=rng)
        self.order = order or ScanOrder.row_major()
        self.chunk = chunk
        self.mode: ScanMode = mode

    @property
    def direction(self) -> Direction:
        return self.params.direction

    def scan_sequence(self, seq: Tensor) -> Tensor:
        """Scan an already flattened ``[(B,) T, C]`` sequence."""
        return _scan(seq, self.params, self.mode, self.chunk)

    def forward(self, x: Tensor) -> Tensor:
        spatial = (x.shape[-3], x.shape[-2], x.shape[-1])
        seq = flatten_volume(x, self.order)
        return unflatten_volume(self.scan_sequence(seq), self.order, spatial)
