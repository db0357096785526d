"""
Adam optimizer over named parameters.

    m_t = β1 m_{t-1} + (1 - β1) g
    v_t = β2 v_{t-1} + (1 - β2) g²
    θ  -= lr · (m_t / (1 - β1^t)) / (sqrt(v_t / (1 - β2^t)) + eps)
"""

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kmamba.core.exceptions import NonFiniteGradientError
from kmamba.nn.module import Parameter

logger = logging.getLogger(__name__)


@dataclass
class OptimState:
    """
    Adam hyper-parameters and moment accumulators.

    Attributes:
        learning_rate: Step size
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator floor
        step: Completed updates
        m: First moments by parameter name
        v: Second moments by parameter name
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate hyper-parameters."""
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.step < 0:
            raise ValueError("step must be >= 0")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, Optional[np.ndarray]],
    state: OptimState,
) -> None:
    """
    One bias-corrected Adam update, in place.

    Gradients are checked before any parameter changes. A missing gradient
    counts as zero.

    Raises:
        NonFiniteGradientError: A gradient holds NaN/Inf
    """
    next_step = state.step + 1
    for name, grad in grads.items():
        if grad is not None and not np.all(np.isfinite(grad)):
            logger.error(f"Non-finite gradient in {name} at step {next_step}")
            raise NonFiniteGradientError(name, next_step)

    state.step = next_step
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        value -= (state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(value.dtype)


class Adam:
    """
    Adam bound to a set of named parameters.

    Args:
        named_parameters: ``(name, Parameter)`` pairs, e.g. ``model.named_parameters()``
        learning_rate: Step size
    """

    def __init__(self, named_parameters: Iterable[tuple[str, Parameter]],
                 learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.params = dict(named_parameters)
        self.state = OptimState(learning_rate, beta1, beta2, eps)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        adam_step(
            {name: p.data for name, p in self.params.items()},
            {name: p.grad for name, p in self.params.items()},
            self.state,
        )
