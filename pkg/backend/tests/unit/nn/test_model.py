"""
Unit tests for the full segmentation network.
"""

import numpy as np
import pytest

from kmamba.core.config import ModelConfig
from kmamba.core.exceptions import IndivisiblePatchError, ShapeMismatchError
from kmamba.engine.tensor import Tensor, no_grad
from kmamba.nn.model import (
    FULL_SCALE_CHANNELS,
    FULL_SCALE_PATCH,
    MsdKMamba,
    build_model,
    full_scale_config,
    param_count,
)


class TestMsdKMamba:
    """Tests for MsdKMamba."""

    @pytest.fixture(autouse=True)
    def _config(self, tiny_model_config: ModelConfig):
        self.cfg = tiny_model_config
        self.x = Tensor(np.random.default_rng(0).standard_normal((4, 16, 16, 16)))

    def test_forward_shapes(self):
        """Test logits at input resolution and per-scale heads at levels 1-4."""
        with no_grad():
            out = build_model(self.cfg, scan_chunk=64)(self.x)
        assert out.logits.shape == (4, 16, 16, 16)
        assert [t.shape[1:] for t in out.teacher_logits] == [(n, n, n) for n in (16, 8, 4, 2)]
        assert len(out.student_logits) == 4
        assert out.pyramid.refined is not None
        assert np.all(np.isfinite(out.logits.data))

    def test_batched_forward(self):
        """Test a batch of two keeps the batch axis."""
        x = Tensor(np.random.default_rng(1).standard_normal((2, 4, 16, 16, 16)))
        with no_grad():
            out = build_model(self.cfg)(x)
        assert out.logits.shape == (2, 4, 16, 16, 16)

    def test_stage_kinds(self):
        """Test BKM sits on stages 4 and 5 and HSA elsewhere."""
        kinds = MsdKMamba(self.cfg).stage_kinds()
        assert kinds == ["HsaBlock", "HsaBlock", "HsaBlock", "BkmBlock", "BkmBlock"]

    @pytest.mark.parametrize("flags,expected", [
        ({"use_bkm": False}, ["HsaBlock"] * 3 + ["ConvBlock"] * 2),
        ({"use_hsa": False}, ["ConvBlock"] * 3 + ["BkmBlock"] * 2),
        ({"use_hsa": False, "use_bkm": False}, ["ConvBlock"] * 5),
    ])
    def test_ablated_stage_kinds(self, flags, expected):
        """Test disabled components fall back to plain conv blocks."""
        cfg = self.cfg.model_copy(update=flags)
        assert MsdKMamba(cfg).stage_kinds() == expected

    def test_bkm_stages_never_hold_hsa(self):
        """Test ablating BKM keeps HSA off the BKM stages."""
        cfg = self.cfg.model_copy(update={"use_bkm": False, "use_hsa": True})
        kinds = MsdKMamba(cfg).stage_kinds()
        for level in cfg.bkm_stages:
            assert kinds[level - 1] == "ConvBlock"

    def test_without_mda(self):
        """Test the identity bridge emits no per-scale logits."""
        cfg = self.cfg.model_copy(update={"use_mda": False})
        model = build_model(cfg)
        assert model.mda is None
        with no_grad():
            out = model(self.x)
        assert out.teacher_logits == []
        assert out.student_logits == []
        assert out.logits.shape == (4, 16, 16, 16)
        assert param_count(cfg) < param_count(self.cfg)

    def test_indivisible_patch(self):
        """Test spatial sizes must be divisible by 16."""
        with pytest.raises(IndivisiblePatchError):
            build_model(self.cfg)(Tensor(np.zeros((4, 8, 16, 16))))

    def test_wrong_input_channels(self):
        """Test the input must have in_channels modalities."""
        with pytest.raises(ShapeMismatchError):
            build_model(self.cfg)(Tensor(np.zeros((3, 16, 16, 16))))

    def test_same_seed_same_network(self):
        """Test identical seeds build identical parameters."""
        a = build_model(self.cfg, seed=5).state_dict()
        b = build_model(self.cfg, seed=5).state_dict()
        c = build_model(self.cfg, seed=6).state_dict()
        assert a.keys() == b.keys()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert any(not np.array_equal(a[k], c[k]) for k in a)

    def test_param_count_matches_ledger(self):
        """Test param_count agrees with the per-tensor ledger."""
        model = build_model(self.cfg)
        assert param_count(self.cfg) == sum(n for _, _, n in model.param_ledger())
        assert model.param_count() == param_count(self.cfg)

    def test_gradients_reach_every_stage(self):
        """Test a backward pass populates stem and stage gradients."""
        model = build_model(self.cfg)
        out = model(self.x)
        (out.logits * out.logits).mean().backward()
        for name, param in model.named_parameters():
            if name.startswith(("stems.", "head.")):
                assert param.grad is not None, name


class TestFullScaleConfig:
    """Tests for full_scale_config."""

    def test_widths_and_patch(self):
        """Test the exploration mode swaps widths and patch only."""
        cfg = full_scale_config(ModelConfig(kan_hidden=8))
        assert cfg.stage_channels == FULL_SCALE_CHANNELS
        assert cfg.patch_size == FULL_SCALE_PATCH
        assert cfg.kan_hidden == 8
