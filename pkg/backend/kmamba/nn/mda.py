"""
Multi-scale self-distillation aggregation.

The five encoder levels X1..X5 are pooled to the deepest resolution,
concatenated and attended (channel then spatial attention), merged with the
attended deepest level into ν, and ν is projected back to every shallower
level::

    η      = concat_k D_k(X_k)                          k = 1..4
    ν      = A_s(P(A_c(η))) + A_s(A_c'(X5))
    X_i^out = ReLU(U_i(P_i(ν)) + X_i)                   i = 1..4

Per-scale class heads turn X_i into teacher logits and X_i^out into student
logits; ``distill_loss`` mixes a soft-Dice style structural term with a
cross-entropy distribution term.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kmamba.core.config import DistillConfig
from kmamba.core.exceptions import InvalidConfigurationError, ScaleShapeError
from kmamba.engine import ops
from kmamba.engine.conv import avg_pool3d, global_avg_pool3d
from kmamba.engine.resample import resample_trilinear
from kmamba.engine.tensor import Tensor, no_grad
from kmamba.nn.layers import Conv3d, channel_axis, default_rng
from kmamba.nn.module import Module, ModuleList

logger = logging.getLogger(__name__)

NUM_SCALES = 5


# =============================================================================
# Feature pyramid
# =============================================================================

@dataclass(eq=False)
class ScaleFeatureSet:
    """
    Encoder pyramid consumed by the aggregation module.

    Attributes:
        features: X1..X5, ``[(N,) C_k, H_k, W_k, D_k]``, strictly shrinking
        refined: X1^out..X4^out once redistributed
    """

    features: list[Tensor]
    refined: Optional[list[Tensor]] = field(default=None)

    def __post_init__(self) -> None:
        if len(self.features) != NUM_SCALES:
            raise ScaleShapeError(len(self.features), f"expected {NUM_SCALES} scales")
        ranks = {f.ndim for f in self.features}
        if len(ranks) != 1 or ranks.pop() not in (4, 5):
            raise ScaleShapeError(1, "all scales need the same rank, 4 or 5")
        for level in range(1, NUM_SCALES):
            upper = self.spatial(level - 1)
            lower = self.spatial(level)
            if not all(u > d for u, d in zip(upper, lower, strict=True)):
                raise ScaleShapeError(
                    level + 1, f"size {lower} must be strictly smaller than {upper}"
                )
        if self.refined is not None:
            for level, (x, out) in enumerate(zip(self.features, self.refined, strict=False)):
                if x.shape != out.shape:
                    raise ScaleShapeError(level + 1, f"refined {out.shape} != {x.shape}")

    def spatial(self, index: int) -> tuple[int, int, int]:
        shape = self.features[index].shape
        return (shape[-3], shape[-2], shape[-1])

    def channels(self, index: int) -> int:
        x = self.features[index]
        return x.shape[channel_axis(x)]

    @property
    def deepest(self) -> Tensor:
        return self.features[-1]


# =============================================================================
# Attention mappings
# =============================================================================

class ChannelAttention(Module):
    """Squeeze-excitation gate: pool, two pointwise maps, sigmoid."""

    def __init__(self, channels: int, reduction: int = 4,
                 rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.squeeze = Conv3d(channels, hidden, 1, rng=rng)
        self.excite = Conv3d(hidden, channels, 1, rng=rng)

    def gate(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.excite(ops.relu(self.squeeze(global_avg_pool3d(x)))))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.gate(x)


class SpatialAttention(Module):
    """Sigmoid gate from a 7x7x7 conv over channel mean and max maps."""

    def __init__(self, kernel: int = 7, rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        self.conv = Conv3d.same(2, 1, kernel, rng=rng)

    def gate(self, x: Tensor) -> Tensor:
        axis = channel_axis(x)
        stats = ops.concat(
            [x.mean(axis=axis, keepdims=True), ops.amax(x, axis=axis, keepdims=True)], axis=axis
        )
        return ops.sigmoid(self.conv(stats))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.gate(x)


# =============================================================================
# Module
# =============================================================================

class MdaModule(Module):
    """
    Aggregation bridge between encoder and decoder.

    Args:
        stage_channels: C1..C5 of the encoder levels
        num_classes: Classes of the per-scale heads
        rng: Initializer randomness

    Attributes:
        identity_attention: Test hook making both attention mappings the identity
    """

    def __init__(self, stage_channels: tuple[int, ...], num_classes: int,
                 rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        if len(stage_channels) != NUM_SCALES:
            raise ScaleShapeError(len(stage_channels), f"expected {NUM_SCALES} widths")
        rng = default_rng(rng)
        self.stage_channels = tuple(stage_channels)
        self.num_classes = num_classes
        shallow = stage_channels[:-1]
        deep = stage_channels[-1]
        self.downsample = ModuleList(Conv3d(c, c, 1, rng=rng) for c in shallow)
        self.pyramid_attention = ChannelAttention(sum(shallow), rng=rng)
        self.deep_attention = ChannelAttention(deep, rng=rng)
        self.spatial_attention = SpatialAttention(rng=rng)
        self.fuse_projection = Conv3d(sum(shallow), deep, 1, rng=rng)
        self.redistribute_projection = ModuleList(Conv3d(deep, c, 1, rng=rng) for c in shallow)
        self.teacher_heads = ModuleList(Conv3d(c, num_classes, 1, rng=rng) for c in shallow)
        self.student_heads = ModuleList(Conv3d(c, num_classes, 1, rng=rng) for c in shallow)
        self.identity_attention = False

    def _channel(self, module: ChannelAttention, x: Tensor) -> Tensor:
        return x if self.identity_attention else module(x)

    def _spatial(self, x: Tensor) -> Tensor:
        return x if self.identity_attention else self.spatial_attention(x)

    def fuse_pyramid(self, s: ScaleFeatureSet) -> Tensor:
        """
        ν at the deepest level's channel count and size.

        Raises:
            ScaleShapeError: A level is not an integer multiple of the deepest size
                or its channels differ from the configured widths
        """
        target = s.spatial(NUM_SCALES - 1)
        pooled = []
        for level in range(NUM_SCALES - 1):
            if s.channels(level) != self.stage_channels[level]:
                raise ScaleShapeError(
                    level + 1, f"{s.channels(level)} channels, expected {self.stage_channels[level]}"
                )
            size = s.spatial(level)
            if any(n % t for n, t in zip(size, target, strict=True)):
                raise ScaleShapeError(level + 1, f"size {size} not a multiple of {target}")
            factor = tuple(n // t for n, t in zip(size, target, strict=True))
            pooled.append(self.downsample[level](avg_pool3d(s.features[level], factor)))
        eta = ops.concat(pooled, axis=channel_axis(s.deepest))
        fused = self._spatial(self.fuse_projection(self._channel(self.pyramid_attention, eta)))
        return fused + self._spatial(self._channel(self.deep_attention, s.deepest))

    def redistribute(self, nu: Tensor, s: ScaleFeatureSet) -> list[Tensor]:
        """X_i^out = ReLU(U_i(P_i(ν)) + X_i) for the four shallower levels."""
        refined = []
        for level in range(NUM_SCALES - 1):
            projected = self.redistribute_projection[level](nu)
            upsampled = resample_trilinear(projected, s.spatial(level))
            refined.append(ops.relu(upsampled + s.features[level]))
        return refined

    def forward(self, s: ScaleFeatureSet) -> ScaleFeatureSet:
        nu = self.fuse_pyramid(s)
        return ScaleFeatureSet(s.features, self.redistribute(nu, s))

    def class_logits(self, s: ScaleFeatureSet) -> tuple[list[Tensor], list[Tensor]]:
        """(teacher, student) logits per shallower level."""
        if s.refined is None:
            raise ScaleShapeError(1, "pyramid has not been redistributed")
        teacher = [head(x) for head, x in zip(self.teacher_heads, s.features, strict=False)]
        student = [head(x) for head, x in zip(self.student_heads, s.refined, strict=True)]
        return teacher, student


def fuse_pyramid(s: ScaleFeatureSet, module: MdaModule) -> Tensor:
    """Fuse the whole pyramid into the bottleneck feature with ``module``."""
    return module.fuse_pyramid(s)


def redistribute(nu: Tensor, s: ScaleFeatureSet, module: MdaModule) -> list[Tensor]:
    """Spread ``nu`` back over every level of ``s``; one refined map per level."""
    return module.redistribute(nu, s)


# =============================================================================
# Distillation loss
# =============================================================================

@dataclass
class DistillResult:
    """Scalar loss plus per-scale diagnostics (plain floats)."""

    total: Tensor
    struct: list[float]
    distribution: list[float]


def _voxel_mean(per_voxel: Tensor) -> Tensor:
    return per_voxel.mean()


def structural_term(p: Tensor, q: Tensor, axis: int, eps: float) -> Tensor:
    """Voxel mean of ``1 - 2 Σ_c p q / (Σ_c p + Σ_c q + eps)``."""
    overlap = (p * q).sum(axis=axis)
    total = p.sum(axis=axis) + q.sum(axis=axis) + eps
    return _voxel_mean(1.0 - 2.0 * overlap / total)


def distribution_term(p: Tensor, q: Tensor, axis: int, eps: float) -> Tensor:
    """Voxel mean of ``-Σ_c p log(q + eps)``."""
    return _voxel_mean(-(p * ops.log(q + eps)).sum(axis=axis))


def entropy(p: Tensor, axis: int, eps: float = 1e-7) -> Tensor:
    """Voxel mean of ``-Σ_c p log(p + eps)``, the lower bound of ``distribution_term``."""
    return distribution_term(p, p, axis, eps)


def distill_loss(
    teacher_logits: list[Tensor], student_logits: list[Tensor], cfg: DistillConfig
) -> DistillResult:
    """
    Self-distillation loss summed over scales.

    Each scale contributes ``α·struct + (1 - α)·distribution`` on softmax
    probabilities of its teacher and student logits. A term with zero weight
    is left out of the graph.

    Raises:
        InvalidConfigurationError: Fewer than two classes
        ScaleShapeError: Teacher and student logits disagree in shape
    """
    alpha, eps = cfg.alpha, cfg.epsilon
    total: Optional[Tensor] = None
    struct_values: list[float] = []
    dist_values: list[float] = []
    for level, (t_logits, s_logits) in enumerate(zip(teacher_logits, student_logits, strict=True)):
        if t_logits.shape != s_logits.shape:
            raise ScaleShapeError(level + 1, f"teacher {t_logits.shape} != student {s_logits.shape}")
        axis = channel_axis(t_logits)
        if t_logits.shape[axis] < 2:
            raise InvalidConfigurationError(
                "model.num_classes", t_logits.shape[axis], "distillation needs at least two classes"
            )
        p = ops.softmax_channels(t_logits, axis)
        if cfg.stop_gradient_teacher:
            p = p.detach()
        q = ops.softmax_channels(s_logits, axis)

        terms = []
        if alpha > 0.0:
            struct = structural_term(p, q, axis, eps)
            terms.append(struct * alpha)
            struct_values.append(struct.item())
        else:
            with no_grad():
                struct_values.append(structural_term(p, q, axis, eps).item())
        if alpha < 1.0:
            dist = distribution_term(p, q, axis, eps)
            terms.append(dist * (1.0 - alpha))
            dist_values.append(dist.item())
        else:
            with no_grad():
                dist_values.append(distribution_term(p, q, axis, eps).item())

        for term in terms:
            total = term if total is None else total + term

    if total is None:
        raise ScaleShapeError(0, "no scales to distill")
    return DistillResult(total=total, struct=struct_values, distribution=dist_values)
