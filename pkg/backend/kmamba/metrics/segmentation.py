"""
Overlap and boundary-distance scores on label volumes.

Classes are int labels or callables ``labels -> bool mask`` (nested regions).

Conventions:
- both masks empty: Dice = IoU = 1.0; HD95 undefined
- one mask empty: Dice = IoU = 0.0; HD95 undefined
- HD95 pools the directed surface-to-surface distances of both directions
  and takes the nearest-rank 95th percentile (ceil(0.95 n)-th smallest)
- surface voxels are mask voxels with a 6-connected neighbour outside the
  mask (volume edges count as outside)
"""

import logging
import math
from typing import Any, Literal, Optional

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from kmamba.core.domain.volume import LabelVolume
from kmamba.core.exceptions import UndefinedMetricError

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 24 ** 3
PERCENTILE = 0.95

DistanceMethod = Literal["auto", "brute", "edt"]

_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


# =============================================================================
# Overlap
# =============================================================================

def _masks(a: LabelVolume, b: LabelVolume, cls: Any) -> tuple[np.ndarray, np.ndarray]:
    a.require_same_dims(b)
    return a.mask(cls), b.mask(cls)


def dice(a: LabelVolume, b: LabelVolume, cls: Any) -> float:
    """
    2|A∩B| / (|A| + |B|).

    Raises:
        DimensionMismatchError: Volumes differ in dims
    """
    ma, mb = _masks(a, b, cls)
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(ma, mb).sum()) / total


def iou(a: LabelVolume, b: LabelVolume, cls: Any) -> float:
    """|A∩B| / |A∪B|."""
    ma, mb = _masks(a, b, cls)
    union = int(np.logical_or(ma, mb).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(ma, mb).sum()) / union


# =============================================================================
# Boundary distances
# =============================================================================

def surface(mask: np.ndarray) -> np.ndarray:
    """Surface voxels of a boolean mask."""
    eroded = ndimage.binary_erosion(mask, structure=_SIX_CONNECTED, border_value=0)
    return np.logical_and(mask, ~eroded)


def directed_distances_brute(
    source: np.ndarray, target: np.ndarray, spacing: tuple[float, ...]
) -> np.ndarray:
    """Distance from every ``source`` voxel to the nearest ``target`` voxel, all pairs."""
    scale = np.asarray(spacing, dtype=np.float64)
    src = np.argwhere(source) * scale
    tgt = np.argwhere(target) * scale
    return cdist(src, tgt).min(axis=1)


def directed_distances_edt(
    source: np.ndarray, target: np.ndarray, spacing: tuple[float, ...]
) -> np.ndarray:
    """Same as ``directed_distances_brute`` via a Euclidean distance transform of ``target``."""
    field = ndimage.distance_transform_edt(~target, sampling=spacing)
    return np.asarray(field[source], dtype=np.float64)


def nearest_rank(values: np.ndarray, q: float = PERCENTILE) -> float:
    """The ceil(q n)-th smallest value."""
    ordered = np.sort(values)
    rank = max(math.ceil(q * ordered.size), 1)
    return float(ordered[rank - 1])


def pooled_surface_distances(
    ma: np.ndarray, mb: np.ndarray, spacing: tuple[float, ...], method: DistanceMethod = "auto"
) -> np.ndarray:
    """Both directed distance sets between the surfaces of two nonempty masks."""
    sa, sb = surface(ma), surface(mb)
    if method == "auto":
        method = "brute" if ma.size <= BRUTE_FORCE_LIMIT else "edt"
    directed = directed_distances_brute if method == "brute" else directed_distances_edt
    return np.concatenate([directed(sa, sb, spacing), directed(sb, sa, spacing)])


def hd95(
    a: LabelVolume, b: LabelVolume, cls: Any, method: DistanceMethod = "auto"
) -> float:
    """
    Symmetric 95th-percentile surface distance, in spacing units.

    Args:
        a: Prediction
        b: Reference
        cls: Label or region callable
        method: ``brute`` all-pairs, ``edt`` distance transform, ``auto`` by size

    Raises:
        UndefinedMetricError: Either mask is empty
        DimensionMismatchError: Volumes differ in dims
    """
    ma, mb = _masks(a, b, cls)
    if not ma.any() or not mb.any():
        which = "both" if not ma.any() and not mb.any() else ("first" if not ma.any() else "second")
        raise UndefinedMetricError("hd95", cls if not callable(cls) else "region", f"{which} mask empty")
    return nearest_rank(pooled_surface_distances(ma, mb, b.spacing, method))


def score(a: LabelVolume, b: LabelVolume, cls: Any) -> tuple[float, Optional[float], float]:
    """(dice, hd95 or None when undefined, iou)."""
    try:
        distance: Optional[float] = hd95(a, b, cls)
    except UndefinedMetricError as e:
        logger.debug(f"hd95 missing: {e.message}")
        distance = None
    return dice(a, b, cls), distance, iou(a, b, cls)
