"""
Domain entities for kmamba.

- Volume / LabelVolume: intensity and label grids with voxel spacing
- Phantom: synthetic multi-modal case with nested ground truth
- Records: CSV result rows (training steps, metrics, benchmarks, ablations, sweeps)
"""

from kmamba.core.domain.phantom import NUM_PHANTOM_CLASSES, REGIONS, Phantom
from kmamba.core.domain.records import (
    AblationRecord,
    BenchRecord,
    MetricRecord,
    SweepRecord,
    TrainStepRecord,
    ValidationSummary,
)
from kmamba.core.domain.volume import LabelVolume, Volume

__all__ = [
    "NUM_PHANTOM_CLASSES",
    "REGIONS",
    "AblationRecord",
    "BenchRecord",
    "LabelVolume",
    "MetricRecord",
    "Phantom",
    "SweepRecord",
    "TrainStepRecord",
    "ValidationSummary",
    "Volume",
]
