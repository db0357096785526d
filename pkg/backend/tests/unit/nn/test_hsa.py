"""
Unit tests for the hierarchical semantic alignment block.
"""

import numpy as np
import pytest

from kmamba.core.exceptions import ChannelSplitError, ShapeMismatchError
from kmamba.engine.gradcheck import gradcheck
from kmamba.engine.tensor import Tensor
from kmamba.nn.hsa import HsaBlock, hsa_forward, split_widths
from kmamba.nn.layers import zero_parameters


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class TestSplitWidths:
    """Tests for split_widths."""

    @pytest.mark.parametrize("channels,expand,expected", [
        (4, 2.0, (2, 8)),
        (2, 2.0, (1, 4)),
        (3, 2.0, (2, 8)),
        (1, 1.0, (1, 4)),
    ])
    def test_parts_pad_to_four(self, channels, expand, expected):
        """Test the projection is padded to four equal parts."""
        assert split_widths(channels, expand) == expected

    def test_invalid_channels(self):
        """Test zero channels or a non-positive expansion raise."""
        with pytest.raises(ChannelSplitError):
            split_widths(0, 2.0)
        with pytest.raises(ChannelSplitError):
            split_widths(4, 0.0)


@pytest.mark.usefixtures("float64")
class TestHsaBlock:
    """Tests for HsaBlock paths."""

    def setup_method(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(23)

    def test_zero_parameters_is_identity(self):
        """Test all-zero learnable weights give Z = F_in."""
        block = zero_parameters(HsaBlock(4, rng=self.rng))
        x = Tensor(self.rng.standard_normal((4, 3, 3, 3)))
        np.testing.assert_array_equal(hsa_forward(x, block).data, x.data)

    def test_zero_weights_zero_cross_scale_path(self):
        """Test A1 vanishes when every convolution is zero."""
        block = zero_parameters(HsaBlock(4, rng=self.rng))
        x = Tensor(self.rng.standard_normal((4, 2, 2, 2)))
        np.testing.assert_array_equal(block.csc_branch(x).data, 0.0)

    def test_delta_reduction(self):
        """Test identity fusion maps reduce A1 to b + e_0 + e_1 + e_2."""
        block = HsaBlock(2, expand=2.0, rng=self.rng)
        assert block.part == 1
        for fuse in (block.fuse_1, block.fuse_2, block.fuse_out):
            fuse.weight.data[...] = 1.0
            fuse.bias.data[...] = 0.0
        x = Tensor(self.rng.standard_normal((2, 2, 2, 2)))
        base, (e0, e1, e2) = block.split(x)
        expected = (base + e0 + e1 + e2).data
        out = block.csc_branch(x).data
        np.testing.assert_allclose(out, np.concatenate([expected, expected]), atol=1e-12)

    def test_descriptor_of_constant_input(self):
        """Test the pooled descriptor of a constant volume is the constant."""
        block = HsaBlock(3, rng=self.rng)
        values = np.array([0.5, -2.0, 7.0])
        x = Tensor(np.broadcast_to(values[:, None, None, None], (3, 2, 2, 2)).copy())
        np.testing.assert_allclose(block.descriptor(x).data.reshape(-1), values, atol=1e-12)

    def test_channel_attention_of_zero_input(self):
        """Test B2 = 0 for a zero input."""
        block = HsaBlock(3, rng=self.rng)
        out = block.channel_attention(Tensor(np.zeros((3, 2, 2, 2))))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_channel_attention_matches_reference(self):
        """Test B2 against a plain 1-D convolution across channels."""
        block = HsaBlock(6, rng=self.rng)
        x = self.rng.standard_normal((6, 4, 4, 4))
        desc = x.mean(axis=(1, 2, 3))
        taps = block.channel_conv.weight.data.reshape(3)
        padded = np.pad(desc, 1)
        conv = np.array([taps @ padded[c:c + 3] for c in range(6)]) + block.channel_conv.bias.data[0]
        expected = (desc * sigmoid(conv))[:, None, None, None] * np.ones((4, 4, 4))
        np.testing.assert_allclose(block.channel_attention(Tensor(x)).data, expected, atol=1e-12)

    def test_channel_only_configuration(self):
        """Test a zero A1 path leaves Z = F_in + M_SRF(B2)."""
        block = HsaBlock(2, rng=self.rng)
        zero_parameters(block.fuse_out)
        x = Tensor(self.rng.standard_normal((2, 2, 2, 2)))
        expected = block.receptive_field(block.channel_attention(x)).data + x.data
        np.testing.assert_allclose(block(x).data, expected, atol=1e-12)

    def test_shape_preserved(self):
        """Test the block keeps an 8-channel 8^3 volume's shape."""
        block = HsaBlock(8, rng=self.rng)
        x = Tensor(self.rng.standard_normal((8, 8, 8, 8)))
        assert block(x).shape == (8, 8, 8, 8)
        assert np.all(np.isfinite(block(x).data))

    def test_batched_channel_attention(self):
        """Test batched inputs get per-item descriptors."""
        block = HsaBlock(3, rng=self.rng)
        x = self.rng.standard_normal((2, 3, 2, 2, 2))
        batched = block.channel_attention(Tensor(x)).data
        np.testing.assert_allclose(batched[1], block.channel_attention(Tensor(x[1])).data,
                                   atol=1e-12)

    def test_channel_mismatch(self):
        """Test an input with the wrong channel count raises."""
        with pytest.raises(ShapeMismatchError):
            HsaBlock(4)(Tensor(np.zeros((3, 2, 2, 2))))

    def test_gradient(self):
        """Test input and parameter gradients against central differences."""
        block = HsaBlock(4, rng=self.rng)
        x = Tensor(self.rng.standard_normal((4, 4, 4, 4)), requires_grad=True)
        params = {"x": x, **dict(block.named_parameters())}
        result = gradcheck(lambda: block(x), params, rtol=1e-4, max_coords=8)
        assert result.passed, result.to_dict()
