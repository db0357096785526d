"""
Unit tests for the on-disk phantom dataset.
"""

from pathlib import Path

import numpy as np
import pytest

from kmamba.core.exceptions import DatasetNotFoundError, InvalidConfigurationError
from kmamba.infrastructure.data.dataset import (
    PhantomDatasetRepository,
    assign_splits,
    generate_dataset,
    zscore,
)
from kmamba.infrastructure.data.phantom import generate_phantom
from kmamba.infrastructure.storage.manifest import MANIFEST_NAME


class TestHelpers:
    """Tests for zscore and assign_splits."""

    def test_zscore_per_modality(self):
        """Test every modality ends with zero mean and unit variance."""
        image = np.random.default_rng(0).normal(5.0, 3.0, (3, 4, 4, 4)).astype(np.float32)
        out = zscore(image)
        np.testing.assert_allclose(out.mean(axis=(1, 2, 3)), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.std(axis=(1, 2, 3)), 1.0, atol=1e-5)

    def test_zscore_constant_channel(self):
        """Test a constant modality is only centred."""
        out = zscore(np.full((1, 2, 2, 2), 7.0, dtype=np.float32))
        np.testing.assert_array_equal(out, 0.0)

    def test_split_counts(self):
        """Test round(n * fraction) cases go to validation."""
        splits = assign_splits(8, 0.25, seed=3)
        assert splits.count("val") == 2
        assert assign_splits(8, 0.25, seed=3) == splits
        assert assign_splits(4, 0.0, seed=0) == ["train"] * 4

    def test_invalid_fraction(self):
        """Test fractions outside [0, 1) are rejected."""
        with pytest.raises(InvalidConfigurationError):
            assign_splits(4, 1.0, seed=0)


class TestPhantomDatasetRepository:
    """Tests for generate_dataset and PhantomDatasetRepository."""

    def test_generate_and_load(self, temp_dir: Path):
        """Test generated cases load back with their split and seed."""
        records = generate_dataset(temp_dir, n=4, size=16, seed=10, threads=2)
        assert [r.seed for r in records] == [10, 11, 12, 13]
        assert (temp_dir / MANIFEST_NAME).is_file()

        repo = PhantomDatasetRepository(temp_dir, normalize=False)
        assert len(repo.case_ids()) == 4
        assert len(repo.case_ids("val")) == 1
        case = repo.load_case("case_00012")
        reference = generate_phantom(12, size=16)
        np.testing.assert_array_equal(case.image, reference.image)
        np.testing.assert_array_equal(case.labels.labels, reference.labels.labels)

    def test_normalized_load(self, temp_dir: Path):
        """Test normalization z-scores each modality on load."""
        generate_dataset(temp_dir, n=1, size=16, val_fraction=0.0)
        case = PhantomDatasetRepository(temp_dir).load_split("train")[0]
        np.testing.assert_allclose(case.image.mean(axis=(1, 2, 3)), 0.0, atol=1e-5)

    def test_missing_manifest(self, temp_dir: Path):
        """Test a directory without manifest raises DatasetNotFoundError."""
        with pytest.raises(DatasetNotFoundError):
            PhantomDatasetRepository(temp_dir)

    def test_unknown_case(self, temp_dir: Path):
        """Test an unknown case id raises DatasetNotFoundError."""
        generate_dataset(temp_dir, n=1, size=16, val_fraction=0.0)
        with pytest.raises(DatasetNotFoundError):
            PhantomDatasetRepository(temp_dir).load_case("case_99999")

    def test_missing_case_file(self, temp_dir: Path):
        """Test a manifest pointing at a deleted file raises DatasetNotFoundError."""
        records = generate_dataset(temp_dir, n=1, size=16, val_fraction=0.0)
        (temp_dir / records[0].label).unlink()
        with pytest.raises(DatasetNotFoundError):
            PhantomDatasetRepository(temp_dir).load_case(records[0].case_id)
