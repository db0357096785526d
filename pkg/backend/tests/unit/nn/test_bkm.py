"""
Unit tests for the bidirectional KAN-enhanced scan block.
"""

import numpy as np
import pytest

from kmamba.engine.gradcheck import gradcheck
from kmamba.engine.tensor import Tensor
from kmamba.nn.bkm import BkmBlock, bkm_forward
from kmamba.nn.layers import zero_parameters


@pytest.mark.usefixtures("float64")
class TestBkmBlock:
    """Tests for BkmBlock."""

    def setup_method(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(17)

    def test_zero_parameters_is_identity(self):
        """Test a fully zeroed block returns its input."""
        block = zero_parameters(BkmBlock(3, d_state=4, kan_hidden=4, kan_grid=4, rng=self.rng))
        x = Tensor(self.rng.standard_normal((3, 2, 3, 2)))
        np.testing.assert_array_equal(bkm_forward(x, block).data, x.data)

    def test_constant_input_hand_computation(self):
        """Test memoryless scans on a constant volume against hand arithmetic."""
        block = zero_parameters(BkmBlock(1, d_state=1, kan_hidden=2, kan_grid=4, rng=self.rng))
        block.input_projection.weight.data[...] = 2.0
        block.input_projection.bias.data[...] = 0.5
        for branch in (block.forward_branch, block.backward_branch):
            branch.params.force_lambda(np.zeros(1))
            branch.params.gamma.data[...] = 1.0
            branch.params.tau.data[...] = 1.0
        block.output_projection.weight.data[...] = 1.0
        x = Tensor(np.ones((1, 2, 2, 2)))
        # F_0 = 2.5 per voxel; F_f = F_b = 2.5; KAN zeroed; Y = 2.5 + 2.5 + 1
        np.testing.assert_allclose(block(x).data, 6.0, atol=1e-12)

    def test_branches_differ_in_direction(self):
        """Test the two scans see the sequence from opposite ends."""
        block = BkmBlock(2, d_state=3, kan_hidden=4, kan_grid=4, chunk=3, rng=self.rng)
        x = Tensor(self.rng.standard_normal((2, 2, 2, 3)))
        forward, backward = block.branches(x)
        assert forward.shape == backward.shape == x.shape
        assert not np.allclose(forward.data, backward.data)

    def test_batched_shape_preserved(self):
        """Test a batched input keeps its shape."""
        block = BkmBlock(2, d_state=3, kan_hidden=4, kan_grid=4, rng=self.rng)
        x = Tensor(self.rng.standard_normal((2, 2, 2, 2, 2)))
        assert block(x).shape == (2, 2, 2, 2, 2)

    def test_gradient(self):
        """Test input and parameter gradients against central differences."""
        block = BkmBlock(2, d_state=3, kan_hidden=4, kan_grid=4, chunk=16, rng=self.rng)
        x = Tensor(self.rng.standard_normal((2, 4, 4, 4)), requires_grad=True)
        params = {"x": x, **dict(block.named_parameters())}
        result = gradcheck(lambda: block(x), params, eps=1e-4, rtol=1e-4, max_coords=8)
        assert result.passed, result.to_dict()
