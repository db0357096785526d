"""
Unit tests for the autograd tensor.

Covers construction dtypes, the backward contract and the global modes.
"""

import numpy as np
import pytest

from kmamba.core.exceptions import GradientContractError, NonFiniteError
from kmamba.engine import ops
from kmamba.engine.tensor import (
    Tensor,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    set_default_dtype,
)


class TestTensorConstruction:
    """Tests for Tensor construction and conversion."""

    def test_float_data_keeps_dtype(self):
        """Test float64 input stays float64 regardless of the default."""
        t = Tensor(np.zeros(3, dtype=np.float64))
        assert t.dtype == np.float64

    def test_integer_data_uses_default_dtype(self):
        """Test non-float input is cast to the default dtype."""
        assert Tensor([1, 2, 3]).dtype == np.float32
        with default_dtype("float64"):
            assert Tensor([1, 2, 3]).dtype == np.float64

    def test_default_dtype_restored(self):
        """Test the context manager restores the previous dtype."""
        before = get_default_dtype()
        with default_dtype("float64"):
            pass
        assert get_default_dtype() == before

    def test_set_default_dtype_rejects_integers(self):
        """Test only float32/float64 are accepted."""
        with pytest.raises(ValueError):
            set_default_dtype("int32")

    def test_numpy_returns_copy(self):
        """Test numpy() does not alias the tensor storage."""
        t = Tensor(np.ones(2))
        copy = t.numpy()
        copy[0] = 5.0
        assert t.data[0] == 1.0

    def test_detach_cuts_graph(self):
        """Test detach yields a leaf without grad tracking."""
        x = Tensor(np.ones(2), requires_grad=True)
        y = (x * 2.0).detach()
        assert y.is_leaf
        assert not y.requires_grad


class TestBackward:
    """Tests for reverse-mode differentiation."""

    def test_sum_gradient_is_ones(self):
        """Test d sum(x) / dx = 1."""
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square_gradient(self):
        """Test d sum(x*x) / dx = 2x."""
        values = np.array([[-1.5, 0.0, 2.0]])
        x = Tensor(values, requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, 2.0 * values)

    def test_shared_subexpression_accumulates(self):
        """Test a tensor used twice receives both contributions."""
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = x * x + x
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_repeated_backward_accumulates(self):
        """Test calling backward twice adds gradients."""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        x.sum().backward()
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_broadcast_gradient_is_reduced(self):
        """Test gradients of broadcast operands keep the operand shape."""
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        (a * b).sum().backward()
        np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])
        np.testing.assert_array_equal(a.grad, np.tile([1.0, 2.0, 3.0], (2, 1)))

    def test_non_scalar_root_rejected(self):
        """Test backward on a vector raises a contract error."""
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GradientContractError):
            (x * 2.0).backward()

    def test_root_without_grad_rejected(self):
        """Test backward on a constant raises a contract error."""
        with pytest.raises(GradientContractError):
            Tensor(np.ones(1)).backward()


class TestModes:
    """Tests for no_grad and the finiteness check."""

    def test_no_grad_records_nothing(self):
        """Test results inside no_grad do not track gradients."""
        x = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            assert not is_grad_enabled()
            y = x * 3.0
        assert is_grad_enabled()
        assert not y.requires_grad
        assert y.creator is None

    def test_non_finite_forward_raises(self):
        """Test an operation producing inf raises NonFiniteError."""
        x = Tensor(np.array([0.0]))
        with np.errstate(divide="ignore"), pytest.raises(NonFiniteError):
            ops.log(x)
