"""
Unit tests for volume, phantom and record entities.
"""

import numpy as np
import pytest

from kmamba.core.domain.phantom import REGIONS, Phantom
from kmamba.core.domain.records import (
    AblationRecord,
    MetricRecord,
    TrainStepRecord,
    ValidationSummary,
)
from kmamba.core.domain.volume import LabelVolume, Volume, dtype_code
from kmamba.core.exceptions import (
    DimensionMismatchError,
    DtypeMismatchError,
    LabelOutOfRangeError,
    ShapeMismatchError,
)


class TestVolume:
    """Tests for Volume."""

    def test_single_channel_promoted(self):
        """Test a 3D array becomes one modality."""
        volume = Volume(np.zeros((4, 5, 6), dtype=np.float32), (1.0, 1.0, 2.0))
        assert volume.modalities == 1
        assert volume.dims == (4, 5, 6)
        assert volume.spacing == (1.0, 1.0, 2.0)

    def test_payload_bytes(self):
        """Test a 64^3 uint8 volume carries 262144 bytes."""
        volume = Volume(np.zeros((1, 64, 64, 64), dtype=np.uint8))
        assert volume.payload_bytes == 262144
        assert volume.dtype == "u8"
        assert volume.to_dict()["dims"] == [64, 64, 64]

    def test_unsupported_dtype(self):
        """Test only float32 and uint8 are accepted."""
        with pytest.raises(DtypeMismatchError):
            Volume(np.zeros((2, 2, 2), dtype=np.float64))
        assert dtype_code(np.zeros(1, dtype=np.float32)) == "f32"

    def test_bad_rank(self):
        """Test rank-2 arrays are rejected."""
        with pytest.raises(ShapeMismatchError):
            Volume(np.zeros((2, 2), dtype=np.float32))


class TestLabelVolume:
    """Tests for LabelVolume."""

    def test_stored_as_uint8(self):
        """Test labels are stored as uint8."""
        labels = LabelVolume(np.array([[[0, 1], [2, 3]]]))
        assert labels.labels.dtype == np.uint8
        assert labels.histogram() == {0: 1, 1: 1, 2: 1, 3: 1}

    def test_out_of_range(self):
        """Test labels must be below num_classes."""
        with pytest.raises(LabelOutOfRangeError):
            LabelVolume(np.full((2, 2, 2), 4), num_classes=4)

    def test_mask_by_label_and_region(self):
        """Test masks from ints and region callables."""
        labels = LabelVolume(np.array([0, 1, 2, 3]).reshape(1, 1, 4))
        np.testing.assert_array_equal(labels.mask(2).reshape(-1), [False, False, True, False])
        np.testing.assert_array_equal(labels.mask(REGIONS["TC"]).reshape(-1),
                                      [False, False, True, True])

    def test_require_same_dims(self):
        """Test dims mismatches are reported."""
        with pytest.raises(DimensionMismatchError):
            LabelVolume(np.zeros((2, 2, 2))).require_same_dims(LabelVolume(np.zeros((2, 2, 3))))


class TestPhantomEntity:
    """Tests for Phantom."""

    def test_default_case_id(self):
        """Test the case id derives from the seed."""
        labels = LabelVolume(np.zeros((2, 2, 2)))
        phantom = Phantom(np.zeros((4, 2, 2, 2), dtype=np.float32), labels, seed=42)
        assert phantom.case_id == "case_00042"
        assert phantom.modalities == 4
        assert phantom.is_nested

    def test_mismatched_image(self):
        """Test image and labels must share dims."""
        with pytest.raises(ShapeMismatchError):
            Phantom(np.zeros((4, 2, 2, 3), dtype=np.float32), LabelVolume(np.zeros((2, 2, 2))), 0)

    def test_volumes(self, phantom: Phantom):
        """Test image and label volumes keep dims and dtypes."""
        assert phantom.image_volume().dtype == "f32"
        assert phantom.label_volume().dtype == "u8"
        assert phantom.label_volume().dims == phantom.dims


class TestRecords:
    """Tests for CSV records."""

    def test_train_step_empty_cells(self):
        """Test missing distillation diagnostics become empty cells."""
        row = TrainStepRecord(3, 0.5, 0.0, 0.5).to_row()
        assert len(row) == len(TrainStepRecord.CSV_HEADER)
        assert row[4:] == [""] * 8

    def test_metric_none_distance(self):
        """Test an undefined HD95 is written as an empty cell."""
        assert MetricRecord("case_00001", "1", 0.0, None, 0.0).to_row()[3] == ""

    def test_ablation_bools_as_ints(self):
        """Test switches are written as 0/1."""
        summary = ValidationSummary(0.4, 0.8, None, 0.7)
        row = AblationRecord(True, False, True, 1234, summary).to_row()
        assert row[:4] == [1, 0, 1, 1234]
        assert row[6] == ""
