"""
Domain entities for volumetric data.

``Volume`` holds one or more co-registered intensity channels; ``LabelVolume``
holds a per-voxel class map. Both carry voxel spacing.
"""

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from kmamba.core.exceptions import (
    DimensionMismatchError,
    DtypeMismatchError,
    LabelOutOfRangeError,
    ShapeMismatchError,
)

VolumeDtype = Literal["f32", "u8"]

_NUMPY_DTYPES: dict[str, np.dtype] = {
    "f32": np.dtype("<f4"),
    "u8": np.dtype("u1"),
}


def dtype_code(array: np.ndarray) -> VolumeDtype:
    """
    Map a numpy dtype to its container code.

    Raises:
        DtypeMismatchError: Neither float32 nor uint8
    """
    if array.dtype == np.float32:
        return "f32"
    if array.dtype == np.uint8:
        return "u8"
    raise DtypeMismatchError("<array>", "f32|u8", str(array.dtype))


def numpy_dtype(code: str) -> np.dtype:
    return _NUMPY_DTYPES[code]


@dataclass(eq=False)
class Volume:
    """
    Multi-channel 3D grid.

    Attributes:
        data: ``[M, H, W, D]`` array, float32 intensities or uint8 labels
        spacing: Voxel size per axis
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        """Validate rank, dims and dtype."""
        if self.data.ndim == 3:
            self.data = self.data[None]
        if self.data.ndim != 4:
            raise ShapeMismatchError("Volume", "[M, H, W, D]", self.data.shape)
        if min(self.data.shape) < 1:
            raise ShapeMismatchError("Volume", "all dims >= 1", self.data.shape)
        dtype_code(self.data)
        self.data = np.ascontiguousarray(self.data)
        self.spacing = tuple(float(s) for s in self.spacing)  # type: ignore[assignment]

    @property
    def dims(self) -> tuple[int, int, int]:
        h, w, d = self.data.shape[1:]
        return (h, w, d)

    @property
    def modalities(self) -> int:
        return int(self.data.shape[0])

    @property
    def dtype(self) -> VolumeDtype:
        return dtype_code(self.data)

    @property
    def payload_bytes(self) -> int:
        return int(self.data.nbytes)

    def to_dict(self) -> dict[str, Any]:
        """Header metadata (no payload)."""
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "dtype": self.dtype,
            "modalities": self.modalities,
        }

    def __repr__(self) -> str:
        return f"Volume(dims={self.dims}, modalities={self.modalities}, dtype={self.dtype})"


@dataclass(eq=False)
class LabelVolume:
    """
    Discrete label map.

    Attributes:
        labels: ``[H, W, D]`` small nonnegative integers
        spacing: Voxel size per axis, scales distances in HD95
        num_classes: Labels must be below this value
    """

    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    num_classes: int = 256

    def __post_init__(self) -> None:
        """Validate rank, range and store as uint8."""
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise ShapeMismatchError("LabelVolume", "[H, W, D] with dims >= 1", labels.shape)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelOutOfRangeError(int(labels.max()) if labels.min() >= 0 else int(labels.min()),
                                       self.num_classes)
        self.labels = np.ascontiguousarray(labels.astype(np.uint8, copy=False))
        self.spacing = tuple(float(s) for s in self.spacing)  # type: ignore[assignment]

    @property
    def dims(self) -> tuple[int, int, int]:
        h, w, d = self.labels.shape
        return (h, w, d)

    def mask(self, cls: Any) -> np.ndarray:
        """
        Boolean mask for a class.

        ``cls`` is an int label, or a callable ``labels -> bool array`` for
        composite regions.
        """
        if callable(cls):
            return np.asarray(cls(self.labels), dtype=bool)
        return self.labels == cls

    def require_same_dims(self, other: "LabelVolume") -> None:
        """
        Raises:
            DimensionMismatchError: Dims differ
        """
        if self.dims != other.dims:
            raise DimensionMismatchError(self.dims, other.dims)

    def histogram(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts, strict=True)}

    def __repr__(self) -> str:
        return f"LabelVolume(dims={self.dims}, classes={sorted(self.histogram())})"
