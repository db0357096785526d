"""
Bidirectional KAN-enhanced state-space block.

    F_0    = P_in(X)
    F_f    = forward scan of F_0
    F_b    = backward scan of F_0
    F_fuse = F_f + ς(N(F_b)) + F_b
    Y      = P_out(F_fuse) + X

N is a per-voxel layer norm over channels and ς the KAN operator over
channels. Both scans share one row-major flattening; the backward branch
reads it back to front.
"""

from typing import Optional

import numpy as np

from kmamba.engine.tensor import Tensor
from kmamba.nn.kan import KanLayer
from kmamba.nn.layers import Conv3d, LayerNorm, default_rng
from kmamba.nn.module import Module
from kmamba.nn.ssm import ScanOrder, SsmBranch, flatten_volume, unflatten_volume


class BkmBlock(Module):
    """
    Shape-preserving block for low-resolution stages.

    Args:
        channels: C, kept unchanged by every stage of the block
        d_state: State size of each scan direction
        kan_hidden: Hidden width Q of the KAN operator
        kan_grid: Grid intervals of the KAN splines
        kan_range: KAN grid covers ``[-kan_range, kan_range]``
        chunk: Scan chunk length
        rng: Initializer randomness
    """

    def __init__(
        self,
        channels: int,
        d_state: int = 16,
        kan_hidden: int = 64,
        kan_grid: int = 8,
        kan_range: float = 3.0,
        chunk: int = 256,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        rng = default_rng(rng)
        self.channels = channels
        self.order = ScanOrder.row_major()
        self.input_projection = Conv3d(channels, channels, 1, rng=rng)
        self.forward_branch = SsmBranch(channels, d_state, "forward", self.order, chunk, rng=rng)
        self.backward_branch = SsmBranch(channels, d_state, "backward", self.order, chunk, rng=rng)
        self.norm = LayerNorm(channels, axis=-1)
        self.kan = KanLayer(channels, kan_hidden, channels, kan_grid, kan_range, rng=rng)
        self.output_projection = Conv3d(channels, channels, 1, rng=rng)

    def _sequences(self, x: Tensor) -> tuple[Tensor, Tensor]:
        seq = flatten_volume(self.input_projection(x), self.order)
        return self.forward_branch.scan_sequence(seq), self.backward_branch.scan_sequence(seq)

    def branches(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """(F_f, F_b) in volume layout."""
        spatial = (x.shape[-3], x.shape[-2], x.shape[-1])
        fwd, bwd = self._sequences(x)
        return (unflatten_volume(fwd, self.order, spatial),
                unflatten_volume(bwd, self.order, spatial))

    def forward(self, x: Tensor) -> Tensor:
        spatial = (x.shape[-3], x.shape[-2], x.shape[-1])
        fwd, bwd = self._sequences(x)
        fused = fwd + self.kan(self.norm(bwd)) + bwd
        return self.output_projection(unflatten_volume(fused, self.order, spatial)) + x

    def extra_repr(self) -> str:
        return f"channels={self.channels}"


def bkm_forward(x: Tensor, block: BkmBlock) -> Tensor:
    return block(x)
