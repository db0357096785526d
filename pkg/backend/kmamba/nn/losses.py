"""
Segmentation objectives.

    L_origin = β·L_CE + (1 - β)·L_Dice
    L_total  = λ1·L_origin + λ2·L_SD
"""

from typing import Optional, Union

import numpy as np

from kmamba.core.config import LossWeights
from kmamba.core.domain.volume import LabelVolume
from kmamba.core.exceptions import LabelOutOfRangeError, ShapeMismatchError
from kmamba.engine import ops
from kmamba.engine.tensor import Tensor, as_tensor
from kmamba.nn.layers import channel_axis

DICE_SMOOTH = 1e-5

Target = Union[LabelVolume, np.ndarray]


def one_hot(target: Target, logits: Tensor) -> np.ndarray:
    """
    Class indicator array laid out like ``logits``.

    Args:
        target: Labels ``[H, W, D]`` (or ``[N, H, W, D]`` for batched logits)
        logits: ``[C, H, W, D]`` or ``[N, C, H, W, D]``

    Raises:
        LabelOutOfRangeError: A label is >= C
        ShapeMismatchError: Spatial layout differs from the logits
    """
    labels = target.labels if isinstance(target, LabelVolume) else np.asarray(target)
    axis = channel_axis(logits)
    num_classes = logits.shape[axis]
    expected = logits.shape[:axis] + logits.shape[axis + 1:]
    if labels.shape != expected:
        raise ShapeMismatchError("origin_loss target", expected, labels.shape)
    if labels.size and (int(labels.max()) >= num_classes or int(labels.min()) < 0):
        raise LabelOutOfRangeError(int(labels.max()), num_classes)
    classes = np.arange(num_classes).reshape((num_classes,) + (1,) * (labels.ndim - axis))
    encoded = np.expand_dims(labels, axis) == classes
    return encoded.astype(logits.dtype)


def cross_entropy(logits: Tensor, target: Target) -> Tensor:
    """Voxel mean of ``-log softmax(logits)[true class]``."""
    axis = channel_axis(logits)
    hot = one_hot(target, logits)
    return -(ops.log_softmax(logits, axis) * hot).sum(axis=axis).mean()


def soft_dice_loss(logits: Tensor, target: Target, smooth: float = DICE_SMOOTH) -> Tensor:
    """
    ``1 - mean_c (2 Σ p_c g_c + s) / (Σ p_c + Σ g_c + s)``.

    The mean runs over classes present in the target.
    """
    axis = channel_axis(logits)
    hot = one_hot(target, logits)
    probs = ops.softmax_channels(logits, axis)
    reduce_axes = tuple(i for i in range(logits.ndim) if i != axis)
    intersection = (probs * hot).sum(axis=reduce_axes)
    denominator = probs.sum(axis=reduce_axes) + hot.sum(axis=reduce_axes) + smooth
    dice = (2.0 * intersection + smooth) / denominator
    present = (hot.sum(axis=reduce_axes) > 0).astype(logits.dtype)
    return 1.0 - (dice * present).sum() / float(present.sum())


def origin_loss(logits: Tensor, target: Target, w: Optional[LossWeights] = None) -> Tensor:
    """
    β·cross-entropy + (1 - β)·soft Dice.

    Raises:
        LabelOutOfRangeError: Target label not below the class count
    """
    w = w or LossWeights()
    if w.beta == 1.0:
        return cross_entropy(logits, target)
    if w.beta == 0.0:
        return soft_dice_loss(logits, target)
    return cross_entropy(logits, target) * w.beta + soft_dice_loss(logits, target) * (1.0 - w.beta)


def total_loss(
    origin: Union[Tensor, float], sd: Union[Tensor, float, None], w: Optional[LossWeights] = None
) -> Tensor:
    """λ1·origin + λ2·sd; ``sd`` is None when the distillation path is disabled."""
    w = w or LossWeights()
    origin_t = as_tensor(origin)
    if sd is None or w.lambda2 == 0.0:
        return origin_t * w.lambda1
    return origin_t * w.lambda1 + as_tensor(sd) * w.lambda2
