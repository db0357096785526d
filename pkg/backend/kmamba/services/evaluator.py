"""
Inference and scoring.

Cases are segmented whole (the network is fully convolutional) and scored
per foreground label, optionally also on the nested regions WT/TC/ET.
"""

import logging
from collections.abc import Iterable
from typing import Optional

import numpy as np

from kmamba.core.domain.phantom import REGIONS, Phantom
from kmamba.core.domain.records import MetricRecord, ValidationSummary
from kmamba.core.domain.volume import LabelVolume
from kmamba.engine.tensor import Tensor, no_grad
from kmamba.metrics.segmentation import dice, score
from kmamba.nn.model import MsdKMamba

logger = logging.getLogger(__name__)


def predict(model: MsdKMamba, image: np.ndarray) -> np.ndarray:
    """
    Arg-max labels for one ``[M, H, W, D]`` image, in eval mode.

    The model's previous train/eval mode is restored afterwards.
    """
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    try:
        with no_grad():
            logits = model(Tensor(image, dtype=dtype)).logits
    finally:
        model.train(was_training)
    return np.argmax(logits.data, axis=0).astype(np.uint8)


class Evaluator:
    """
    Scores a model on phantom cases.

    Args:
        model: Trained network
        regions: Also score WT/TC/ET
    """

    def __init__(self, model: MsdKMamba, regions: bool = False) -> None:
        self.model = model
        self.regions = regions
        self.num_classes = model.cfg.num_classes

    def segment(self, case: Phantom) -> LabelVolume:
        return LabelVolume(predict(self.model, case.image), case.labels.spacing,
                           num_classes=self.num_classes)

    def score_case(self, case: Phantom) -> list[MetricRecord]:
        prediction = self.segment(case)
        records = []
        for cls in range(1, self.num_classes):
            d, h, i = score(prediction, case.labels, cls)
            records.append(MetricRecord(case.case_id, str(cls), d, h, i))
        if self.regions:
            for name, region in REGIONS.items():
                d, h, i = score(prediction, case.labels, region)
                records.append(MetricRecord(case.case_id, name, d, h, i))
        return records

    def evaluate(self, cases: Iterable[Phantom]) -> list[MetricRecord]:
        records: list[MetricRecord] = []
        count = 0
        for case in cases:
            records.extend(self.score_case(case))
            count += 1
        logger.info(f"Evaluated {count} cases ({len(records)} rows)")
        return records

    def foreground_dice(self, cases: Iterable[Phantom]) -> float:
        """Mean binary Dice of ``label >= 1`` over cases."""
        values = [dice(self.segment(case), case.labels, REGIONS["WT"]) for case in cases]
        return float(np.mean(values)) if values else float("nan")


def _mean(values: list[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def summarize(records: Iterable[MetricRecord], final_l_total: float) -> ValidationSummary:
    """
    Mean per-label scores; region rows are excluded and undefined HD95 cells
    are skipped.
    """
    rows = [r for r in records if r.cls not in REGIONS]
    return ValidationSummary(
        final_l_total=final_l_total,
        val_dice=_mean([r.dice for r in rows]),
        val_hd95=_mean([r.hd95 for r in rows if r.hd95 is not None]),
        val_iou=_mean([r.iou for r in rows]),
    )
