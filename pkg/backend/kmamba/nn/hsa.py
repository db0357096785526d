"""
Hierarchical semantic alignment block.

Three paths over an input F_in with C channels:

- cross-scale channel path (A1): pointwise conv + batch norm + ReLU, an
  expanding projection split into a base part and an increase part, the
  increase part refined by a depthwise separable conv and split into three
  equal parts, then a chain of pointwise fusion maps
- channel attention (B2): global average descriptor gated by a sigmoid of a
  1-D convolution across channels
- selective receptive field: parallel 5x5x5 and 7x7x7 depthwise convs,
  summed and merged pointwise, applied to A1 + B2 and added to F_in
"""

import logging
import math
from typing import Optional

import numpy as np

from kmamba.core.exceptions import ChannelSplitError, ShapeMismatchError
from kmamba.engine import ops
from kmamba.engine.conv import global_avg_pool3d
from kmamba.engine.tensor import Tensor
from kmamba.nn.layers import BatchNorm3d, Conv3d, channel_axis, default_rng
from kmamba.nn.module import Module

logger = logging.getLogger(__name__)

NUM_INCREASE_PARTS = 3


def split_widths(channels: int, expand: float) -> tuple[int, int]:
    """
    Base and per-part increase widths for a projection of ``channels * expand``.

    The projection is padded up to four equal parts: one base part and three
    increase parts.

    Returns:
        (part, projected) where ``projected = 4 * part``

    Raises:
        ChannelSplitError: Non-positive channel count or expansion
    """
    if channels < 1:
        raise ChannelSplitError(channels, "need at least one channel")
    if expand <= 0:
        raise ChannelSplitError(channels, f"expansion must be positive, got {expand}")
    expanded = max(int(round(channels * expand)), 1)
    part = math.ceil(expanded / (NUM_INCREASE_PARTS + 1))
    return part, part * (NUM_INCREASE_PARTS + 1)


class HsaBlock(Module):
    """
    Shape-preserving attention block used by the encoder stages.

    Args:
        channels: C of the input and output
        expand: Projection expansion factor
        rng: Initializer randomness

    Attributes:
        part: Channels of the base part and of each increase part
        projected: Total projection width (4 * part)
    """

    def __init__(self, channels: int, expand: float = 2.0,
                 rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        rng = default_rng(rng)
        self.channels = channels
        self.part, self.projected = split_widths(channels, expand)
        increase = NUM_INCREASE_PARTS * self.part

        # cross-scale channel path
        self.pw_conv = Conv3d(channels, channels, 1, rng=rng)
        self.pw_norm = BatchNorm3d(channels)
        self.projection = Conv3d(channels, self.projected, 1, rng=rng)
        self.increase_depthwise = Conv3d.same(increase, increase, 3, groups=increase, rng=rng)
        self.increase_pointwise = Conv3d(increase, increase, 1, rng=rng)
        self.fuse_1 = Conv3d(self.part, self.part, 1, rng=rng)
        self.fuse_2 = Conv3d(self.part, self.part, 1, rng=rng)
        self.fuse_out = Conv3d(self.part, channels, 1, rng=rng)

        # 1-D conv across the channel axis of the pooled descriptor
        self.channel_conv = Conv3d(1, 1, (3, 1, 1), padding=(1, 0, 0), rng=rng)

        # selective receptive field
        self.srf_5 = Conv3d.same(channels, channels, 5, groups=channels, rng=rng)
        self.srf_7 = Conv3d.same(channels, channels, 7, groups=channels, rng=rng)
        self.srf_merge = Conv3d(channels, channels, 1, rng=rng)

    def _check(self, f_in: Tensor) -> None:
        axis = channel_axis(f_in)
        if f_in.shape[axis] != self.channels:
            raise ShapeMismatchError("HsaBlock", self.channels, f_in.shape[axis])

    def split(self, f_in: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Base part b and the three refined increase parts e_0..e_2."""
        axis = channel_axis(f_in)
        zeta = ops.relu(self.pw_norm(self.pw_conv(f_in)))
        projected = self.projection(zeta)
        base, increase = ops.split(projected, [self.part, NUM_INCREASE_PARTS * self.part], axis)
        refined = self.increase_pointwise(self.increase_depthwise(increase))
        parts = ops.split(refined, [self.part] * NUM_INCREASE_PARTS, axis)
        return base, parts

    def csc_branch(self, f_in: Tensor) -> Tensor:
        """A1 = M_out(M_2(M_1(b + e_0) + e_1) + e_2), C channels."""
        self._check(f_in)
        base, (e0, e1, e2) = self.split(f_in)
        return self.fuse_out(self.fuse_2(self.fuse_1(base + e0) + e1) + e2)

    def descriptor(self, f_in: Tensor) -> Tensor:
        """Global average per channel, ``[(N,) C, 1, 1, 1]``."""
        return global_avg_pool3d(f_in)

    def attention_weights(self, descriptor: Tensor) -> Tensor:
        """σ(C_1D(X2)), same layout as the descriptor."""
        batched = descriptor.ndim == 5
        n = descriptor.shape[0] if batched else 1
        as_line = descriptor.reshape(n, 1, self.channels, 1, 1)
        gate = ops.sigmoid(self.channel_conv(as_line))
        return gate.reshape(descriptor.shape)

    def channel_attention(self, f_in: Tensor) -> Tensor:
        """B2 = X2 * σ(C_1D(X2)), broadcast over the voxels of ``f_in``."""
        self._check(f_in)
        desc = self.descriptor(f_in)
        attended = desc * self.attention_weights(desc)
        return attended * np.ones(f_in.shape[-3:], dtype=f_in.dtype)

    def receptive_field(self, x: Tensor) -> Tensor:
        """M_SRF: pointwise merge of the 5x5x5 and 7x7x7 depthwise responses."""
        return self.srf_merge(self.srf_5(x) + self.srf_7(x))

    def forward(self, f_in: Tensor) -> Tensor:
        return self.receptive_field(self.csc_branch(f_in) + self.channel_attention(f_in)) + f_in

    def extra_repr(self) -> str:
        return f"channels={self.channels}, part={self.part}"


def hsa_forward(f_in: Tensor, block: HsaBlock) -> Tensor:
    return block(f_in)
