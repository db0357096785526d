"""
Central finite-difference gradient checking.

The checked function returns any-shaped output; it is reduced to a scalar
``sum(out * R)`` with a fixed random ``R`` so every output element carries
weight. Parameters are perturbed in place, one coordinate at a time.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kmamba.engine.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class GradcheckResult:
    """Outcome of one gradient check."""

    name: str
    tolerance: float
    max_rel_error: float = 0.0
    worst_param: str = ""
    worst_index: tuple[int, ...] = ()
    checked: int = 0
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> dict[str, object]:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "worst_param": self.worst_param,
            "checked": self.checked,
        }


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    """``|a - n| / max(|a|, |n|, floor)`` for one coordinate."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    *,
    eps: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    max_coords: Optional[int] = None,
    seed: int = 0,
    name: str = "gradcheck",
) -> GradcheckResult:
    """
    Compare backprop gradients against central differences.

    Args:
        fn: Recomputes the output from the current parameter values
        params: Named tensors to check (float64, ``requires_grad``)
        eps: Perturbation step
        rtol: Pass threshold on the worst relative error
        atol: Absolute discrepancy accepted for near-zero gradients
        max_coords: Sample at most this many coordinates per parameter
        seed: Seeds the output weighting and the coordinate sample
        name: Label for the result

    Returns:
        GradcheckResult with the worst relative error over checked coordinates

    Note:
        Each coordinate is judged on its own: the denominator is
        ``max(|a|, |n|, atol / rtol)``, so a coordinate fails when its
        discrepancy exceeds both ``rtol`` of its own magnitude and ``atol``.
        Small gradient entries next to large ones get no extra slack.
    """
    rng = np.random.default_rng(seed)
    for label, tensor in params.items():
        if tensor.dtype != np.float64:
            logger.warning(f"{name}: parameter {label} is {tensor.dtype}, expected float64")

    out = fn()
    weights = rng.standard_normal(out.shape).astype(out.dtype)

    def objective() -> Tensor:
        return (fn() * weights).sum()

    for tensor in params.values():
        tensor.zero_grad()
    objective().backward()
    analytic = {
        label: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for label, t in params.items()
    }

    result = GradcheckResult(name=name, tolerance=rtol)
    floor = atol / rtol
    with no_grad():
        for label, tensor in params.items():
            flat = tensor.data.reshape(-1)
            grad_flat = analytic[label].reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            worst = 0.0
            for coord in coords:
                original = flat[coord]
                flat[coord] = original + eps
                plus = objective().item()
                flat[coord] = original - eps
                minus = objective().item()
                flat[coord] = original
                numeric = (plus - minus) / (2.0 * eps)
                err = relative_error(float(grad_flat[coord]), numeric, floor)
                worst = max(worst, err)
                if err > result.max_rel_error:
                    result.max_rel_error = err
                    result.worst_param = label
                    result.worst_index = tuple(
                        int(i) for i in np.unravel_index(int(coord), tensor.shape)
                    )
            result.per_param[label] = worst
            result.checked += len(coords)

    for tensor in params.values():
        tensor.zero_grad()
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(
        level,
        f"{name}: max rel err {result.max_rel_error:.3e} over {result.checked} coords "
        f"({'pass' if result.passed else 'FAIL'}, worst={result.worst_param})",
    )
    return result
