"""
Runtime scaling of the linear scan against quadratic softmax attention.

Each sequence length is timed over a few repeats after one warm-up call;
the log-log slope of mean runtime against length is fitted with a
least-squares line. A slope near 1 means linear cost, near 2 quadratic.
"""

import logging
import time
from collections.abc import Callable, Sequence
from typing import Literal

import numpy as np

from kmamba.core.domain.records import BenchRecord
from kmamba.core.exceptions import InvalidConfigurationError, InvariantViolationError
from kmamba.engine.tensor import Tensor, default_dtype, no_grad
from kmamba.nn.ssm import SsmParameters, scan_chunked

logger = logging.getLogger(__name__)

BenchKind = Literal["scan", "attention"]

DEFAULT_SIZES: dict[str, tuple[int, ...]] = {
    "scan": tuple(2 ** k for k in range(10, 19, 2)),
    "attention": tuple(2 ** k for k in range(8, 13)),
}
SLOPE_BOUNDS: dict[str, tuple[float, float]] = {
    "scan": (0.9, 1.3),
    "attention": (1.7, 2.3),
}

SCAN_CHANNELS = 8
SCAN_STATE = 16
ATTENTION_DIM = 32
ATTENTION_BLOCK = 512


def quadratic_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                        block: int = ATTENTION_BLOCK) -> np.ndarray:
    """Softmax attention over all pairs, computed in row blocks to bound memory."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    out = np.empty_like(v, shape=(q.shape[0], v.shape[-1]))
    for start in range(0, q.shape[0], block):
        scores = q[start:start + block] @ k.T * scale
        scores -= scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=1, keepdims=True)
        out[start:start + block] = weights @ v
    return out


def time_call(fn: Callable[[], object], repeats: int) -> tuple[float, float]:
    """(mean, std) wall time in nanoseconds after one warm-up call."""
    fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return float(np.mean(samples)), float(np.std(samples))


def fit_slope(sizes: Sequence[int], times_ns: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    slope, _ = np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times_ns, float)), 1)
    return float(slope)


def _workload(kind: str, length: int, rng: np.random.Generator,
              dtype: np.dtype) -> Callable[[], object]:
    if kind == "scan":
        with default_dtype(dtype):
            params = SsmParameters(SCAN_CHANNELS, SCAN_STATE, SCAN_CHANNELS, rng=rng)
        u = Tensor(rng.standard_normal((length, SCAN_CHANNELS)), dtype=dtype)

        def run_scan() -> object:
            with no_grad():
                return scan_chunked(u, params)

        return run_scan

    q, k, v = (rng.standard_normal((length, ATTENTION_DIM)).astype(dtype) for _ in range(3))
    return lambda: quadratic_attention(q, k, v)


def run_benchmark(
    kind: BenchKind,
    sizes: Sequence[int] = (),
    repeats: int = 3,
    seed: int = 0,
    precision: str = "float64",
) -> list[BenchRecord]:
    """
    Time ``kind`` at every size; every record carries the common fitted slope.

    Raises:
        InvalidConfigurationError: Unknown kind or fewer than two sizes
    """
    if kind not in DEFAULT_SIZES:
        raise InvalidConfigurationError("bench.kind", kind, "expected scan or attention")
    sizes = tuple(sizes) or DEFAULT_SIZES[kind]
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise InvalidConfigurationError("bench.sizes", sizes, "need two or more positive sizes")
    rng = np.random.default_rng(seed)
    dtype = np.dtype(precision)

    timings = []
    for length in sizes:
        mean_ns, std_ns = time_call(_workload(kind, length, rng, dtype), repeats)
        timings.append((length, mean_ns, std_ns))
        logger.info(f"bench {kind} T={length}: {mean_ns / 1e6:.3f} ms ± {std_ns / 1e6:.3f}")
    slope = fit_slope([t[0] for t in timings], [t[1] for t in timings])
    logger.info(f"bench {kind}: log-log slope {slope:.3f}")
    return [BenchRecord(T=n, mean_ns=m, std_ns=s, slope_fit=slope) for n, m, s in timings]


def check_slope(kind: str, slope: float) -> None:
    """
    Raises:
        InvariantViolationError: Slope outside the expected band for ``kind``
    """
    low, high = SLOPE_BOUNDS[kind]
    if not low <= slope <= high:
        raise InvariantViolationError(f"bench.{kind}", f"slope {slope:.3f} outside [{low}, {high}]")
