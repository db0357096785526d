"""
Result rows written by the CLI.

Every record type declares its CSV header; ``to_row`` yields values in the
same order. Missing values are written as empty cells.
"""

from dataclasses import dataclass, field
from typing import Any, ClassVar, Optional


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    return value


@dataclass
class TrainStepRecord:
    """One optimization step."""

    CSV_HEADER: ClassVar[tuple[str, ...]] = (
        "step", "l_origin", "l_sd", "l_total",
        "struct_1", "struct_2", "struct_3", "struct_4",
        "dist_1", "dist_2", "dist_3", "dist_4",
    )

    step: int
    l_origin: float
    l_sd: float
    l_total: float
    struct: list[Optional[float]] = field(default_factory=lambda: [None] * 4)
    dist: list[Optional[float]] = field(default_factory=lambda: [None] * 4)

    def to_row(self) -> list[Any]:
        return [_cell(v) for v in (self.step, self.l_origin, self.l_sd, self.l_total,
                                   *self.struct, *self.dist)]


@dataclass
class MetricRecord:
    """Scores of one class (or region) on one case."""

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("case_id", "class", "dice", "hd95", "iou")

    case_id: str
    cls: str
    dice: float
    hd95: Optional[float]
    iou: float

    def to_row(self) -> list[Any]:
        return [_cell(v) for v in (self.case_id, self.cls, self.dice, self.hd95, self.iou)]


@dataclass
class BenchRecord:
    """Timing of one sequence length."""

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("T", "mean_ns", "std_ns", "slope_fit")

    T: int
    mean_ns: float
    std_ns: float
    slope_fit: float

    def to_row(self) -> list[Any]:
        return [self.T, self.mean_ns, self.std_ns, self.slope_fit]


@dataclass
class ValidationSummary:
    """Mean foreground scores over a validation split."""

    final_l_total: float
    val_dice: Optional[float]
    val_hd95: Optional[float]
    val_iou: Optional[float]


@dataclass
class AblationRecord:
    """One HSA/BKM/MDA combination."""

    CSV_HEADER: ClassVar[tuple[str, ...]] = (
        "hsa", "bkm", "mda", "params", "final_l_total", "val_dice", "val_hd95", "val_iou",
    )

    hsa: bool
    bkm: bool
    mda: bool
    params: int
    summary: ValidationSummary

    def to_row(self) -> list[Any]:
        s = self.summary
        return [_cell(v) for v in (self.hsa, self.bkm, self.mda, self.params,
                                   s.final_l_total, s.val_dice, s.val_hd95, s.val_iou)]


@dataclass
class SweepRecord:
    """One value/seed of a hyper-parameter sweep."""

    CSV_HEADER: ClassVar[tuple[str, ...]] = (
        "key", "value", "seed", "final_l_total", "val_dice", "val_hd95", "val_iou",
    )

    key: str
    value: str
    seed: int
    summary: ValidationSummary

    def to_row(self) -> list[Any]:
        s = self.summary
        return [_cell(v) for v in (self.key, self.value, self.seed,
                                   s.final_l_total, s.val_dice, s.val_hd95, s.val_iou)]
