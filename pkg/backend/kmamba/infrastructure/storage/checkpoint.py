"""
Checkpoint container.

An uncompressed ``.npz`` archive holding one array per named tensor plus a
``__manifest__`` entry: UTF-8 JSON with the format version, the shape and
dtype of every tensor, and free-form metadata (config lines, step, seed).
"""

import json
import logging
import zipfile
from pathlib import Path
from typing import Any

import numpy as np

from kmamba.core.exceptions import CheckpointFormatError, DatasetNotFoundError
from kmamba.core.interfaces.storage import ICheckpointStore

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_KEY = "__manifest__"


class NpzCheckpointStore(ICheckpointStore):
    """Named tensors in an npz archive with a JSON shape manifest."""

    def save(self, path: Path, state: dict[str, np.ndarray], metadata: dict[str, Any]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        manifest = {
            "version": FORMAT_VERSION,
            "tensors": {
                name: {"shape": list(value.shape), "dtype": str(value.dtype)}
                for name, value in state.items()
            },
            "metadata": metadata,
        }
        encoded = np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8)
        with path.open("wb") as fh:
            np.savez(fh, **{MANIFEST_KEY: encoded}, **state)
        logger.info(f"Checkpoint saved: {path} ({len(state)} tensors)")

    def load(self, path: Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
        path = Path(path)
        if not path.is_file():
            raise DatasetNotFoundError(str(path))
        try:
            with np.load(path, allow_pickle=False) as archive:
                arrays = {name: archive[name] for name in archive.files}
        except (zipfile.BadZipFile, ValueError, OSError, EOFError) as e:
            raise CheckpointFormatError(str(path), f"unreadable archive: {e}") from e

        if MANIFEST_KEY not in arrays:
            raise CheckpointFormatError(str(path), "missing manifest")
        try:
            manifest = json.loads(arrays.pop(MANIFEST_KEY).tobytes().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointFormatError(str(path), f"corrupt manifest: {e}") from e

        if manifest.get("version") != FORMAT_VERSION:
            raise CheckpointFormatError(str(path), f"unsupported version {manifest.get('version')}")
        declared = manifest.get("tensors", {})
        if set(declared) != set(arrays):
            missing = sorted(set(declared) - set(arrays))
            extra = sorted(set(arrays) - set(declared))
            raise CheckpointFormatError(str(path), f"manifest mismatch: missing={missing} extra={extra}")
        for name, info in declared.items():
            if list(arrays[name].shape) != info["shape"]:
                raise CheckpointFormatError(
                    str(path), f"{name}: shape {list(arrays[name].shape)} != {info['shape']}"
                )

        logger.info(f"Checkpoint loaded: {path} ({len(arrays)} tensors)")
        return arrays, manifest.get("metadata", {})
