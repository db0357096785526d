"""
Seeded desk-scale acceptance runs.

These train real networks for minutes and are deselected by default;
run them with ``scripts/test.sh --slow``.
"""

from pathlib import Path

import numpy as np
import pytest

from kmamba.core.config import RunConfig, load_run_config
from kmamba.core.domain.phantom import Phantom
from kmamba.infrastructure.data.dataset import zscore
from kmamba.infrastructure.data.phantom import generate_phantom
from kmamba.services.ablation import run_ablation, run_experiment
from kmamba.services.benchmark import SLOPE_BOUNDS, check_slope, run_benchmark
from kmamba.services.evaluator import Evaluator
from kmamba.services.trainer import train

pytestmark = [pytest.mark.slow, pytest.mark.acceptance]

CONFIGS = Path(__file__).resolve().parents[3] / "configs"


def normalized_phantoms(seeds: range, size: int = 32) -> list[Phantom]:
    cases = [generate_phantom(seed, size) for seed in seeds]
    return [Phantom(zscore(c.image), c.labels, c.seed) for c in cases]


@pytest.fixture(scope="module")
def tiny_config() -> RunConfig:
    return load_run_config(CONFIGS / "tiny.cfg")


# =============================================================================
# Training behaviour
# =============================================================================

class TestTraining:
    """Overfit and distillation-direction runs on the tiny network."""

    def test_overfit_four_phantoms(self, tiny_config: RunConfig):
        """Test 500 seeded steps on four phantoms reach foreground Dice > 0.9."""
        cases = normalized_phantoms(range(4))
        result = train(tiny_config, cases)
        losses = [r.l_total for r in result.history]
        assert np.all(np.isfinite(losses))
        assert np.mean(losses[-20:]) < np.mean(losses[:20])
        assert Evaluator(result.model).foreground_dice(cases) > 0.90

    def test_distillation_does_not_hurt(self, tiny_config: RunConfig):
        """Test λ2 = 0.1 is no worse than λ2 = 0 by more than 0.01 mean val Dice."""
        cases = normalized_phantoms(range(100, 120))
        train_cases, val_cases = cases[:15], cases[15:]
        means = {}
        for lambda2 in ("0.0", "0.1"):
            cfg = tiny_config.with_override("loss.lambda2", lambda2)
            scores = [
                run_experiment(cfg.with_override("train.seed", str(seed)), train_cases,
                               val_cases).val_dice
                for seed in (0, 1, 2)
            ]
            means[lambda2] = float(np.mean(scores))
        assert means["0.1"] >= means["0.0"] - 0.01, means

    def test_full_ablation_grid(self, tiny_config: RunConfig):
        """Test all eight component combinations train and score."""
        cases = normalized_phantoms(range(200, 208))
        records = run_ablation(tiny_config, cases[:6], cases[6:], steps=100)
        assert len(records) == 8
        for r in records:
            assert np.isfinite(r.summary.final_l_total)
            assert r.summary.val_dice is not None


# =============================================================================
# Complexity
# =============================================================================

class TestComplexity:
    """Runtime scaling of the selective scan against quadratic attention."""

    @pytest.mark.parametrize("kind", ["scan", "attention"])
    def test_slope_within_bounds(self, kind):
        """Test the fitted log-log slope falls in the expected band."""
        records = run_benchmark(kind, repeats=3, seed=0)
        slope = records[0].slope_fit
        low, high = SLOPE_BOUNDS[kind]
        assert low <= slope <= high, slope
        check_slope(kind, slope)
