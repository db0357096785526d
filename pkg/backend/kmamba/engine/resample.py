"""Separable trilinear resampling (align_corners = False)."""

from functools import lru_cache
from typing import Optional

import numpy as np

from kmamba.core.exceptions import InvalidSpecError, ShapeMismatchError
from kmamba.engine.tensor import Function, Tensor


@lru_cache(maxsize=64)
def interpolation_matrix(source: int, target: int) -> np.ndarray:
    """
    Linear interpolation weights ``[target, source]`` along one axis.

    Output sample ``i`` reads source coordinate ``(i + 0.5) * source / target - 0.5``,
    clamped at the lower edge; the upper neighbour saturates at ``source - 1``.
    """
    matrix = np.zeros((target, source), dtype=np.float64)
    scale = source / target
    for i in range(target):
        coord = max((i + 0.5) * scale - 0.5, 0.0)
        lo = min(int(np.floor(coord)), source - 1)
        hi = min(lo + 1, source - 1)
        frac = coord - lo
        matrix[i, lo] += 1.0 - frac
        matrix[i, hi] += frac
    matrix.setflags(write=False)
    return matrix


class ResampleFn(Function):
    def forward(self, x: np.ndarray, target: tuple[int, int, int]) -> np.ndarray:
        h, w, d = x.shape[-3:]
        self.mh = interpolation_matrix(h, target[0]).astype(x.dtype)
        self.mw = interpolation_matrix(w, target[1]).astype(x.dtype)
        self.md = interpolation_matrix(d, target[2]).astype(x.dtype)
        return np.einsum("...hwd,Hh,Ww,Dd->...HWD", x, self.mh, self.mw, self.md, optimize=True)

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        return (
            np.einsum("...HWD,Hh,Ww,Dd->...hwd", grad, self.mh, self.mw, self.md, optimize=True),
        )


def resample_trilinear(x: Tensor, target: tuple[int, int, int]) -> Tensor:
    """
    Trilinear resampling of the three trailing axes.

    Args:
        x: ``[C, H, W, D]`` or ``[N, C, H, W, D]``
        target: Output ``(H', W', D')``

    Returns:
        Resampled tensor; ``x`` itself when ``target`` equals the current size

    Raises:
        InvalidSpecError: A target dimension is < 1
    """
    if x.ndim < 3:
        raise ShapeMismatchError("resample_trilinear", "rank >= 3", x.shape)
    target = (int(target[0]), int(target[1]), int(target[2]))
    if min(target) < 1:
        raise InvalidSpecError("resample target", f"dimensions must be >= 1, got {target}")
    if tuple(x.shape[-3:]) == target:
        return x
    return ResampleFn.apply(x, target=target)
