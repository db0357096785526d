"""
Full segmentation network.

Encoder: five levels; level 1 runs at input resolution and every later level
halves the size with a strided conv. Each level then applies its stage body:
the BKM block on the configured low-resolution stages, the HSA block
elsewhere, or a plain conv block when a component is ablated.

Bridge: the MDA module refines levels 1-4 (identity bridge when disabled).

Decoder: transposed-conv upsampling, skip concatenation and a conv block per
level, then a pointwise head to class logits.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kmamba.core.config import ModelConfig
from kmamba.core.exceptions import IndivisiblePatchError, ShapeMismatchError
from kmamba.engine import ops
from kmamba.engine.tensor import Tensor
from kmamba.nn.bkm import BkmBlock
from kmamba.nn.hsa import HsaBlock
from kmamba.nn.layers import Conv3d, ConvBlock, ConvBnReLU, ConvTranspose3d, channel_axis
from kmamba.nn.mda import NUM_SCALES, MdaModule, ScaleFeatureSet
from kmamba.nn.module import Module, ModuleList

logger = logging.getLogger(__name__)

PATCH_DIVISOR = 2 ** (NUM_SCALES - 1)

FULL_SCALE_CHANNELS = (32, 64, 128, 256, 320)
FULL_SCALE_PATCH = 128


@dataclass(eq=False)
class ModelOutput:
    """
    Attributes:
        logits: Main logits at input resolution
        pyramid: Encoder features, refined when MDA is on
        teacher_logits: Per-scale logits from X1..X4 (empty without MDA)
        student_logits: Per-scale logits from X1^out..X4^out (empty without MDA)
    """

    logits: Tensor
    pyramid: ScaleFeatureSet
    teacher_logits: list[Tensor] = field(default_factory=list)
    student_logits: list[Tensor] = field(default_factory=list)


def full_scale_config(base: Optional[ModelConfig] = None) -> ModelConfig:
    """Widths and patch of the full-scale exploration mode."""
    base = base or ModelConfig()
    return base.model_copy(update={
        "stage_channels": FULL_SCALE_CHANNELS,
        "patch_size": FULL_SCALE_PATCH,
    })


class MsdKMamba(Module):
    """
    Encoder, aggregation bridge and decoder.

    Args:
        cfg: Network shape and ablation switches
        scan_chunk: Chunk length of the BKM scans
        seed: Initializer seed; identical seeds build identical networks
    """

    def __init__(self, cfg: ModelConfig, scan_chunk: int = 256, seed: int = 0) -> None:
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        widths = cfg.stage_channels

        self.stems = ModuleList()
        self.stages = ModuleList()
        for level, width in enumerate(widths, start=1):
            if level == 1:
                self.stems.append(ConvBnReLU(cfg.in_channels, width, 3, rng=rng))
            else:
                self.stems.append(ConvBnReLU(widths[level - 2], width, 3, stride=2, rng=rng))
            self.stages.append(self._stage(level, width, scan_chunk, rng))

        self.mda: Optional[MdaModule] = (
            MdaModule(widths, cfg.num_classes, rng=rng) if cfg.use_mda else None
        )

        self.upsample = ModuleList()
        self.decode = ModuleList()
        for level in range(NUM_SCALES - 1, 0, -1):
            self.upsample.append(ConvTranspose3d(widths[level], widths[level - 1], rng=rng))
            self.decode.append(ConvBlock(2 * widths[level - 1], widths[level - 1], rng=rng))
        self.head = Conv3d(widths[0], cfg.num_classes, 1, rng=rng)

    def _stage(self, level: int, width: int, scan_chunk: int,
               rng: np.random.Generator) -> Module:
        cfg = self.cfg
        if level in cfg.bkm_stages:
            # Ablating BKM leaves a plain conv block, never HSA
            if cfg.use_bkm:
                return BkmBlock(width, cfg.d_state, cfg.kan_hidden, cfg.kan_grid,
                                cfg.kan_range, scan_chunk, rng=rng)
            return ConvBlock(width, width, rng=rng)
        if cfg.use_hsa:
            return HsaBlock(width, cfg.hsa_expand, rng=rng)
        return ConvBlock(width, width, rng=rng)

    def stage_kinds(self) -> list[str]:
        """Block type of every encoder stage, shallow to deep."""
        return [type(stage).__name__ for stage in self.stages]

    def _validate(self, x: Tensor) -> None:
        axis = channel_axis(x)
        if x.shape[axis] != self.cfg.in_channels:
            raise ShapeMismatchError("MsdKMamba input", self.cfg.in_channels, x.shape[axis])
        spatial = x.shape[-3:]
        if any(n % PATCH_DIVISOR for n in spatial):
            raise IndivisiblePatchError(spatial, PATCH_DIVISOR)

    def encode(self, x: Tensor) -> ScaleFeatureSet:
        features = []
        for stem, stage in zip(self.stems, self.stages, strict=True):
            x = stage(stem(x))
            features.append(x)
        return ScaleFeatureSet(features)

    def forward(self, x: Tensor) -> ModelOutput:
        """
        Args:
            x: ``[in_channels, S, S, S]`` or ``[N, in_channels, S, S, S]``

        Raises:
            IndivisiblePatchError: A spatial size is not divisible by 16
        """
        self._validate(x)
        pyramid = self.encode(x)
        teacher: list[Tensor] = []
        student: list[Tensor] = []
        skips = list(pyramid.features[:-1])
        if self.mda is not None:
            pyramid = self.mda(pyramid)
            teacher, student = self.mda.class_logits(pyramid)
            skips = list(pyramid.refined or skips)

        axis = channel_axis(x)
        y = pyramid.deepest
        for up, decode, skip in zip(self.upsample, self.decode, reversed(skips), strict=True):
            y = decode(ops.concat([up(y), skip], axis=axis))
        return ModelOutput(self.head(y), pyramid, teacher, student)

    def extra_repr(self) -> str:
        flags = [name for name, on in (("hsa", self.cfg.use_hsa), ("bkm", self.cfg.use_bkm),
                                        ("mda", self.cfg.use_mda)) if on]
        return f"widths={self.cfg.stage_channels}, classes={self.cfg.num_classes}, {'+'.join(flags)}"


def build_model(cfg: ModelConfig, scan_chunk: int = 256, seed: int = 0) -> MsdKMamba:
    return MsdKMamba(cfg, scan_chunk=scan_chunk, seed=seed)


def param_count(cfg: ModelConfig) -> int:
    """Learnable scalars of the network described by ``cfg``."""
    return build_model(cfg).param_count()
