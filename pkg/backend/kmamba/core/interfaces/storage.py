"""
Storage interfaces.

These ports describe how services read and write volumes, checkpoints and
datasets. Implementations live in ``kmamba.infrastructure.storage``.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Optional

import numpy as np

from kmamba.core.domain.phantom import Phantom
from kmamba.core.domain.volume import Volume


class IVolumeStore(ABC):
    """Reads and writes single volume files."""

    @abstractmethod
    def write(self, path: Path, volume: Volume) -> None:
        """
        Write a volume.

        Args:
            path: Destination file
            volume: Volume to store
        """

    @abstractmethod
    def read(self, path: Path, expected_dtype: Optional[str] = None) -> Volume:
        """
        Read a volume.

        Args:
            path: Source file
            expected_dtype: Reject files with another dtype code when given

        Returns:
            Volume with header spacing and payload

        Raises:
            DatasetNotFoundError: File missing
            BadMagicError: Not a volume file
            TruncatedPayloadError: Payload shorter/longer than the header announces
            DtypeMismatchError: Dtype unsupported or not the expected one
        """


class ICheckpointStore(ABC):
    """Persists named parameter tensors with metadata."""

    @abstractmethod
    def save(self, path: Path, state: dict[str, np.ndarray], metadata: dict[str, Any]) -> None:
        """
        Save a checkpoint.

        Args:
            path: Destination file
            state: Parameter name -> values
            metadata: JSON-serializable metadata (config lines, step, ...)
        """

    @abstractmethod
    def load(self, path: Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
        """
        Load a checkpoint.

        Returns:
            (state, metadata)

        Raises:
            DatasetNotFoundError: File missing
            CheckpointFormatError: Corrupt container or shape manifest mismatch
        """


class IDatasetRepository(ABC):
    """Phantom dataset on disk with a line-delimited manifest."""

    @abstractmethod
    def case_ids(self, split: Optional[str] = None) -> list[str]:
        """
        List case identifiers.

        Args:
            split: ``train`` / ``val``; all cases when None
        """

    @abstractmethod
    def load_case(self, case_id: str) -> Phantom:
        """
        Load one case.

        Raises:
            DatasetNotFoundError: Unknown case or missing file
        """
