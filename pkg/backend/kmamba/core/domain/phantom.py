"""
Domain entity for synthetic multi-modal phantoms.

Label encoding: 0 background, 1 whole-only, 2 core-only, 3 enhancing.
The nested regions are then WT = label >= 1, TC = label >= 2, ET = label == 3.
"""

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np

from kmamba.core.domain.volume import LabelVolume, Volume
from kmamba.core.exceptions import ShapeMismatchError

NUM_PHANTOM_CLASSES = 4

REGIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "WT": lambda labels: labels >= 1,
    "TC": lambda labels: labels >= 2,
    "ET": lambda labels: labels == 3,
}


@dataclass(eq=False)
class Phantom:
    """
    Synthetic case with known ground truth.

    Attributes:
        image: ``[M, H, W, D]`` float32 intensities, one channel per modality
        labels: Nested structure labels
        seed: Generator seed
        case_id: Identifier used in manifests and metric rows
    """

    image: np.ndarray
    labels: LabelVolume
    seed: int
    case_id: str = ""

    def __post_init__(self) -> None:
        """Validate that modalities share the label dims."""
        if self.image.ndim != 4 or tuple(self.image.shape[1:]) != self.labels.dims:
            raise ShapeMismatchError("Phantom", ("M", *self.labels.dims), self.image.shape)
        if not self.case_id:
            self.case_id = f"case_{self.seed:05d}"

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.dims

    @property
    def modalities(self) -> int:
        return int(self.image.shape[0])

    @property
    def whole(self) -> np.ndarray:
        return REGIONS["WT"](self.labels.labels)

    @property
    def core(self) -> np.ndarray:
        return REGIONS["TC"](self.labels.labels)

    @property
    def enhancing(self) -> np.ndarray:
        return REGIONS["ET"](self.labels.labels)

    @property
    def is_nested(self) -> bool:
        """enhancing ⊆ core ⊆ whole as voxel sets."""
        return bool(
            np.all(self.core <= self.whole) and np.all(self.enhancing <= self.core)
        )

    @property
    def foreground_fraction(self) -> float:
        return float(self.whole.mean())

    def image_volume(self) -> Volume:
        return Volume(self.image.astype(np.float32, copy=False), self.labels.spacing)

    def label_volume(self) -> Volume:
        return Volume(self.labels.labels[None], self.labels.spacing)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "seed": self.seed,
            "dims": list(self.dims),
            "modalities": self.modalities,
            "foreground_fraction": self.foreground_fraction,
        }
