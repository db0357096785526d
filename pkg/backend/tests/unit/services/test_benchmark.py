"""
Unit tests for the runtime scaling benchmark.
"""

import numpy as np
import pytest

from kmamba.core.exceptions import InvalidConfigurationError, InvariantViolationError
from kmamba.services.benchmark import (
    check_slope,
    fit_slope,
    quadratic_attention,
    run_benchmark,
    time_call,
)


class TestBenchmarkHelpers:
    """Tests for fit_slope, time_call and quadratic_attention."""

    def test_fit_slope_exact_power(self):
        """Test t = 3 n² fits slope 2."""
        sizes = [10, 100, 1000]
        assert fit_slope(sizes, [3.0 * n ** 2 for n in sizes]) == pytest.approx(2.0)

    def test_time_call_counts_repeats(self):
        """Test the function runs once per repeat plus a warm-up."""
        calls = []
        mean, std = time_call(lambda: calls.append(1), repeats=4)
        assert len(calls) == 5
        assert mean >= 0.0
        assert std >= 0.0

    def test_attention_matches_direct_softmax(self):
        """Test blocked attention equals the one-shot softmax."""
        rng = np.random.default_rng(0)
        q, k, v = (rng.standard_normal((10, 4)) for _ in range(3))
        scores = q @ k.T / 2.0
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        expected = (weights / weights.sum(axis=1, keepdims=True)) @ v
        np.testing.assert_allclose(quadratic_attention(q, k, v, block=3), expected, atol=1e-12)

    def test_check_slope(self):
        """Test slopes are accepted only inside their band."""
        check_slope("scan", 1.05)
        check_slope("attention", 2.0)
        with pytest.raises(InvariantViolationError):
            check_slope("scan", 1.8)


class TestRunBenchmark:
    """Tests for run_benchmark."""

    @pytest.mark.parametrize("kind", ["scan", "attention"])
    def test_records(self, kind):
        """Test one record per size sharing the fitted slope."""
        records = run_benchmark(kind, sizes=(32, 64), repeats=1)
        assert [r.T for r in records] == [32, 64]
        assert records[0].slope_fit == records[1].slope_fit
        assert all(r.mean_ns > 0 for r in records)

    def test_unknown_kind(self):
        """Test only scan and attention exist."""
        with pytest.raises(InvalidConfigurationError):
            run_benchmark("conv", sizes=(1, 2))  # type: ignore[arg-type]

    def test_needs_two_sizes(self):
        """Test a slope needs at least two sizes."""
        with pytest.raises(InvalidConfigurationError):
            run_benchmark("scan", sizes=(64,))
