"""
Port interfaces.

These interfaces define the contracts that infrastructure adapters implement:
- IVolumeStore: volume container read/write
- ICheckpointStore: parameter checkpoints
- IDatasetRepository: manifest-indexed phantom datasets
"""

from kmamba.core.interfaces.storage import ICheckpointStore, IDatasetRepository, IVolumeStore

__all__ = [
    "ICheckpointStore",
    "IDatasetRepository",
    "IVolumeStore",
]
