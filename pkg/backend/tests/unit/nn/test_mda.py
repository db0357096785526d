"""
Unit tests for multi-scale aggregation and the self-distillation loss.
"""

import math

import numpy as np
import pytest

from kmamba.core.config import DistillConfig
from kmamba.core.exceptions import InvalidConfigurationError, ScaleShapeError
from kmamba.engine import ops
from kmamba.engine.gradcheck import gradcheck
from kmamba.engine.tensor import Tensor
from kmamba.nn.layers import zero_parameters
from kmamba.nn.mda import (
    MdaModule,
    ScaleFeatureSet,
    distill_loss,
    entropy,
    fuse_pyramid,
    redistribute,
)

SIZES = (16, 8, 4, 2, 1)


def pyramid(rng: np.random.Generator, channels: tuple[int, ...]) -> ScaleFeatureSet:
    return ScaleFeatureSet([
        Tensor(rng.standard_normal((c, n, n, n))) for c, n in zip(channels, SIZES, strict=True)
    ])


def constant_pyramid(values: tuple[float, ...]) -> ScaleFeatureSet:
    return ScaleFeatureSet([
        Tensor(np.full((1, n, n, n), v)) for v, n in zip(values, SIZES, strict=True)
    ])


# =============================================================================
# Feature pyramid
# =============================================================================

class TestScaleFeatureSet:
    """Tests for ScaleFeatureSet validation."""

    def test_valid_pyramid(self):
        """Test a strictly shrinking five-level pyramid is accepted."""
        s = pyramid(np.random.default_rng(0), (1, 2, 3, 4, 5))
        assert s.spatial(0) == (16, 16, 16)
        assert s.channels(4) == 5
        assert s.deepest.shape == (5, 1, 1, 1)

    def test_wrong_level_count(self):
        """Test exactly five levels are required."""
        with pytest.raises(ScaleShapeError):
            ScaleFeatureSet([Tensor(np.zeros((1, 4, 4, 4)))] * 4)

    def test_sizes_must_shrink(self):
        """Test a level no smaller than its parent is rejected."""
        levels = [Tensor(np.zeros((1, n, n, n))) for n in (16, 8, 8, 2, 1)]
        with pytest.raises(ScaleShapeError):
            ScaleFeatureSet(levels)

    def test_mixed_ranks(self):
        """Test batched and unbatched levels cannot mix."""
        levels = [Tensor(np.zeros((1, n, n, n))) for n in SIZES]
        levels[2] = Tensor(np.zeros((1, 1, 4, 4, 4)))
        with pytest.raises(ScaleShapeError):
            ScaleFeatureSet(levels)

    def test_refined_shapes_checked(self):
        """Test refined maps must match their levels."""
        s = pyramid(np.random.default_rng(0), (1, 1, 1, 1, 1))
        with pytest.raises(ScaleShapeError):
            ScaleFeatureSet(s.features, [Tensor(np.zeros((2, 16, 16, 16)))])


# =============================================================================
# Aggregation
# =============================================================================

@pytest.mark.usefixtures("float64")
class TestMdaModule:
    """Tests for fuse_pyramid and redistribute."""

    def setup_method(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(31)

    def test_zero_module_passes_deepest_level(self):
        """Test zero weights with identity attention give ν = X5 and X_i^out = ReLU(X_i)."""
        module = zero_parameters(MdaModule((1, 2, 3, 4, 5), 3, rng=self.rng))
        module.identity_attention = True
        s = pyramid(self.rng, (1, 2, 3, 4, 5))
        nu = fuse_pyramid(s, module)
        np.testing.assert_array_equal(nu.data, s.deepest.data)
        refined = redistribute(nu, s, module)
        for x, out in zip(s.features, refined, strict=False):
            np.testing.assert_array_equal(out.data, np.maximum(x.data, 0.0))

    def test_free_functions_match_forward(self):
        """Test fuse_pyramid and redistribute reproduce the module forward pass."""
        module = MdaModule((2, 3, 4, 5, 6), 3, rng=self.rng)
        s = pyramid(self.rng, (2, 3, 4, 5, 6))
        nu = fuse_pyramid(s, module)
        np.testing.assert_array_equal(nu.data, module.fuse_pyramid(s).data)
        assert nu.shape == s.deepest.shape
        refined = redistribute(nu, s, module)
        expected = module(s).refined
        assert expected is not None
        assert len(refined) == len(expected)
        for out, ref in zip(refined, expected, strict=True):
            np.testing.assert_array_equal(out.data, ref.data)

    def test_constant_pyramid_fusion(self):
        """Test ν on constant levels equals the weighted sum of the level values."""
        module = zero_parameters(MdaModule((1, 1, 1, 1, 1), 2, rng=self.rng))
        module.identity_attention = True
        for conv in module.downsample:
            conv.weight.data[...] = 1.0
        weights = np.array([0.5, -1.0, 2.0, 0.25])
        module.fuse_projection.weight.data[...] = weights.reshape(1, 4, 1, 1, 1)
        module.fuse_projection.bias.data[...] = 0.1
        values = (1.0, 2.0, 3.0, 4.0, 5.0)
        nu = module.fuse_pyramid(constant_pyramid(values))
        expected = weights @ np.array(values[:4]) + 0.1 + values[4]
        np.testing.assert_allclose(nu.data, expected, atol=1e-12)

    def test_redistribute_is_nonnegative(self):
        """Test refined maps are ReLU outputs at their level's shape."""
        module = MdaModule((2, 3, 4, 5, 6), 3, rng=self.rng)
        s = pyramid(self.rng, (2, 3, 4, 5, 6))
        refined = module(s).refined
        assert refined is not None
        for x, out in zip(s.features, refined, strict=False):
            assert out.shape == x.shape
            assert np.all(out.data >= 0.0)

    def test_class_logits(self):
        """Test heads emit C channels per shallower level."""
        module = MdaModule((2, 3, 4, 5, 6), 3, rng=self.rng)
        teacher, student = module.class_logits(module(pyramid(self.rng, (2, 3, 4, 5, 6))))
        assert [t.shape for t in teacher] == [(3, n, n, n) for n in SIZES[:4]]
        assert [t.shape for t in student] == [t.shape for t in teacher]

    def test_class_logits_need_refined(self):
        """Test heads refuse a pyramid that was not redistributed."""
        module = MdaModule((1, 1, 1, 1, 1), 2, rng=self.rng)
        with pytest.raises(ScaleShapeError):
            module.class_logits(pyramid(self.rng, (1, 1, 1, 1, 1)))

    def test_channel_mismatch(self):
        """Test a level with the wrong width is rejected."""
        module = MdaModule((1, 1, 1, 1, 1), 2, rng=self.rng)
        with pytest.raises(ScaleShapeError):
            module.fuse_pyramid(pyramid(self.rng, (2, 1, 1, 1, 1)))

    def test_non_multiple_size(self):
        """Test a level not an integer multiple of the deepest size is rejected."""
        module = MdaModule((1, 1, 1, 1, 1), 2, rng=self.rng)
        levels = [Tensor(np.zeros((1, n, n, n))) for n in (15, 8, 4, 3, 2)]
        with pytest.raises(ScaleShapeError):
            module.fuse_pyramid(ScaleFeatureSet(levels))

    def test_gradient(self):
        """Test module parameter gradients against central differences."""
        channels = (1, 2, 2, 2, 3)
        module = MdaModule(channels, 2, rng=self.rng)
        s = ScaleFeatureSet([
            Tensor(self.rng.standard_normal((c, n, n, n)))
            for c, n in zip(channels, (5, 4, 3, 2, 1), strict=True)
        ])
        params = dict(module.named_parameters())

        def refined_flat():
            return ops.concat([r.reshape(-1) for r in module(s).refined], 0)

        result = gradcheck(refined_flat, params, max_coords=4)
        assert result.passed, result.to_dict()


# =============================================================================
# Distillation loss
# =============================================================================

@pytest.mark.usefixtures("float64")
class TestDistillLoss:
    """Tests for distill_loss."""

    def setup_method(self):
        """Set up test fixtures."""
        self.teacher = [Tensor(np.array([math.log(3.0), 0.0]).reshape(2, 1, 1, 1))]
        self.student = [Tensor(np.zeros((2, 1, 1, 1)), requires_grad=True)]

    def test_single_voxel_values(self):
        """Test p = (0.75, 0.25), q = (0.5, 0.5) gives struct 0.5 and distribution ln 2."""
        result = distill_loss(self.teacher, self.student, DistillConfig(alpha=0.5))
        assert result.struct[0] == pytest.approx(0.5, abs=1e-6)
        assert result.distribution[0] == pytest.approx(math.log(2.0), abs=1e-6)
        assert result.total.item() == pytest.approx(0.5966, abs=1e-4)

    def test_alpha_endpoints(self):
        """Test α = 1 keeps only the structural term and α = 0 only the distribution term."""
        only_struct = distill_loss(self.teacher, self.student, DistillConfig(alpha=1.0))
        only_dist = distill_loss(self.teacher, self.student, DistillConfig(alpha=0.0))
        assert only_struct.total.item() == pytest.approx(0.5, abs=1e-6)
        assert only_dist.total.item() == pytest.approx(math.log(2.0), abs=1e-6)
        assert only_struct.distribution[0] == pytest.approx(math.log(2.0), abs=1e-6)

    def test_equal_distributions_reach_entropy(self):
        """Test the distribution term equals the teacher entropy when q = p."""
        rng = np.random.default_rng(2)
        logits = Tensor(rng.standard_normal((3, 2, 2, 2)))
        result = distill_loss([logits], [logits], DistillConfig(alpha=0.0))
        expected = entropy(ops.softmax_channels(logits, 0), axis=0).item()
        assert result.total.item() == pytest.approx(expected, abs=1e-9)

    def test_distribution_term_bounded_by_entropy(self):
        """Test cross-entropy never falls below the teacher entropy."""
        rng = np.random.default_rng(3)
        teacher = Tensor(rng.standard_normal((4, 3, 3, 3)))
        student = Tensor(rng.standard_normal((4, 3, 3, 3)))
        result = distill_loss([teacher], [student], DistillConfig(alpha=0.0))
        floor = entropy(ops.softmax_channels(teacher, 0), axis=0).item()
        assert result.distribution[0] >= floor - 1e-9

    def test_sums_over_scales(self):
        """Test each scale adds its own term."""
        result = distill_loss(self.teacher * 3, self.student * 3, DistillConfig())
        assert len(result.struct) == 3
        assert result.total.item() == pytest.approx(3 * 0.5966, abs=3e-4)

    def test_teacher_gradient_stopped(self):
        """Test the teacher receives no gradient unless configured to."""
        teacher = Tensor(self.teacher[0].data.copy(), requires_grad=True)
        distill_loss([teacher], self.student, DistillConfig()).total.backward()
        assert teacher.grad is None
        assert self.student[0].grad is not None

        teacher.zero_grad()
        cfg = DistillConfig(stop_gradient_teacher=False)
        distill_loss([teacher], self.student, cfg).total.backward()
        assert teacher.grad is not None

    def test_student_gradient(self):
        """Test student gradients against central differences."""
        student = Tensor(np.random.default_rng(4).standard_normal((3, 2, 2, 1)),
                         requires_grad=True)
        teacher = Tensor(np.random.default_rng(5).standard_normal((3, 2, 2, 1)))
        result = gradcheck(lambda: distill_loss([teacher], [student], DistillConfig()).total,
                           {"student": student})
        assert result.passed, result.to_dict()

    def test_single_class_rejected(self):
        """Test fewer than two classes is a configuration error."""
        one = [Tensor(np.zeros((1, 2, 2, 2)))]
        with pytest.raises(InvalidConfigurationError):
            distill_loss(one, one, DistillConfig())

    def test_shape_mismatch(self):
        """Test teacher and student shapes must agree."""
        with pytest.raises(ScaleShapeError):
            distill_loss(self.teacher, [Tensor(np.zeros((2, 1, 1, 2)))], DistillConfig())
