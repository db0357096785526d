"""
Unit tests for the npz checkpoint container.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from kmamba.core.exceptions import CheckpointFormatError, DatasetNotFoundError
from kmamba.infrastructure.storage.checkpoint import MANIFEST_KEY, NpzCheckpointStore


class TestNpzCheckpointStore:
    """Tests for NpzCheckpointStore."""

    def setup_method(self):
        """Set up test fixtures."""
        self.store = NpzCheckpointStore()
        self.state = {
            "stems.0.conv.weight": np.arange(6, dtype=np.float32).reshape(2, 3),
            "buffer:stems.0.norm.running_var": np.ones(2, dtype=np.float64),
        }

    def test_save_and_load(self, temp_dir: Path):
        """Test tensors and metadata come back unchanged."""
        path = temp_dir / "ckpt" / "final.npz"
        self.store.save(path, self.state, {"step": 5, "config": ["train.steps = 5"]})
        state, metadata = self.store.load(path)
        assert set(state) == set(self.state)
        for name, value in self.state.items():
            np.testing.assert_array_equal(state[name], value)
            assert state[name].dtype == value.dtype
        assert metadata == {"step": 5, "config": ["train.steps = 5"]}

    def test_missing_manifest(self, temp_dir: Path):
        """Test a plain npz without manifest is rejected."""
        path = temp_dir / "plain.npz"
        np.savez(path, weight=np.zeros(2))
        with pytest.raises(CheckpointFormatError):
            self.store.load(path)

    def test_manifest_shape_mismatch(self, temp_dir: Path):
        """Test tensors must match the shapes their manifest declares."""
        manifest = {"version": 1, "tensors": {"w": {"shape": [3], "dtype": "float32"}},
                    "metadata": {}}
        encoded = np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8)
        path = temp_dir / "bad.npz"
        np.savez(path, **{MANIFEST_KEY: encoded}, w=np.zeros(2, dtype=np.float32))
        with pytest.raises(CheckpointFormatError):
            self.store.load(path)

    def test_unsupported_version(self, temp_dir: Path):
        """Test another format version is rejected."""
        manifest = {"version": 99, "tensors": {}, "metadata": {}}
        encoded = np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8)
        path = temp_dir / "future.npz"
        np.savez(path, **{MANIFEST_KEY: encoded})
        with pytest.raises(CheckpointFormatError):
            self.store.load(path)

    def test_not_an_archive(self, temp_dir: Path):
        """Test random bytes are rejected."""
        path = temp_dir / "noise.npz"
        path.write_bytes(b"not a zip file")
        with pytest.raises(CheckpointFormatError):
            self.store.load(path)

    def test_missing_file(self, temp_dir: Path):
        """Test a missing file raises DatasetNotFoundError."""
        with pytest.raises(DatasetNotFoundError):
            self.store.load(temp_dir / "absent.npz")
