"""
Component ablations and hyper-parameter sweeps.

Both train one model per configuration on the training split and report
mean validation scores. Ablated components are replaced by plain conv
stages (HSA, BKM) or an identity bridge (MDA).
"""

import itertools
import logging
from collections.abc import Sequence
from typing import Optional

from kmamba.core.config import RunConfig
from kmamba.core.domain.phantom import Phantom
from kmamba.core.domain.records import AblationRecord, SweepRecord, ValidationSummary
from kmamba.core.exceptions import InvalidConfigurationError
from kmamba.nn.model import param_count
from kmamba.services.evaluator import Evaluator, summarize
from kmamba.services.trainer import Trainer

logger = logging.getLogger(__name__)

COMPONENTS = ("hsa", "bkm", "mda")


def run_experiment(cfg: RunConfig, train_cases: list[Phantom],
                   val_cases: list[Phantom]) -> ValidationSummary:
    """Train on ``train_cases``; score on ``val_cases`` (the training cases when empty)."""
    result = Trainer(cfg, train_cases).fit()
    if not val_cases:
        logger.warning("Validation split is empty; scoring on the training cases")
        val_cases = train_cases
    records = Evaluator(result.model).evaluate(val_cases)
    return summarize(records, result.final_l_total)


def ablation_grid(components: Sequence[str] = COMPONENTS,
                  base: Optional[dict[str, bool]] = None) -> list[dict[str, bool]]:
    """
    Every on/off combination of ``components``; the others keep ``base``.

    Raises:
        InvalidConfigurationError: Unknown component name
    """
    unknown = [c for c in components if c not in COMPONENTS]
    if unknown:
        raise InvalidConfigurationError("ablate.grid", ",".join(unknown),
                                        f"expected a subset of {','.join(COMPONENTS)}")
    base = base or {c: True for c in COMPONENTS}
    grid = []
    for values in itertools.product((False, True), repeat=len(components)):
        combo = dict(base)
        combo.update(zip(components, values, strict=True))
        grid.append(combo)
    return grid


def run_ablation(
    cfg: RunConfig,
    train_cases: list[Phantom],
    val_cases: list[Phantom],
    components: Sequence[str] = COMPONENTS,
    steps: Optional[int] = None,
) -> list[AblationRecord]:
    """Train and score every combination of the ablation grid."""
    base = {c: getattr(cfg.model, f"use_{c}") for c in COMPONENTS}
    records = []
    for combo in ablation_grid(components, base):
        run_cfg = cfg
        for name, on in combo.items():
            run_cfg = run_cfg.with_override(f"model.use_{name}", str(on))
        if steps is not None:
            run_cfg = run_cfg.with_override("train.steps", str(steps))
        label = "+".join(name for name, on in combo.items() if on) or "baseline"
        logger.info(f"Ablation run: {label}")
        summary = run_experiment(run_cfg, train_cases, val_cases)
        records.append(AblationRecord(combo["hsa"], combo["bkm"], combo["mda"],
                                      param_count(run_cfg.model), summary))
    return records


def run_sweep(
    cfg: RunConfig,
    key: str,
    values: Sequence[str],
    seeds: Sequence[int],
    train_cases: list[Phantom],
    val_cases: list[Phantom],
) -> list[SweepRecord]:
    """
    One run per value and seed; ``key`` is a dotted ``section.key``.

    Raises:
        InvalidConfigurationError: Unknown key or invalid value
    """
    records = []
    for value in values:
        valued = cfg.with_override(key, value)
        for seed in seeds:
            run_cfg = valued.with_override("train.seed", str(seed))
            logger.info(f"Sweep run: {key}={value} seed={seed}")
            summary = run_experiment(run_cfg, train_cases, val_cases)
            records.append(SweepRecord(key, value, seed, summary))
    return records
