"""
Custom exceptions for the kmamba segmentation toolkit.

This module defines all custom exceptions used throughout the package.
They provide clear error messages and carry structured context that the
CLI turns into distinct exit codes.
"""

from typing import Any, Optional


# =============================================================================
# Base Exception
# =============================================================================

class KMambaException(Exception):
    """Base exception for all kmamba exceptions."""

    def __init__(self, message: str, details: Optional[dict[str, Any]] = None) -> None:
        """
        Initialize the exception.

        Args:
            message: Human-readable error message
            details: Additional context about the error
        """
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


# =============================================================================
# Tensor Exceptions
# =============================================================================

class TensorException(KMambaException):
    """Base exception for tensor engine errors."""


class ShapeMismatchError(TensorException):
    """Raised when operand dimensions are inconsistent."""

    def __init__(self, operation: str, expected: Any, actual: Any) -> None:
        super().__init__(
            f"{operation}: expected dimensions {expected}, got {actual}",
            {"operation": operation, "expected": str(expected), "actual": str(actual)},
        )


class InvalidSpecError(TensorException):
    """Raised when an operator specification cannot produce a valid output."""

    def __init__(self, spec: str, reason: str) -> None:
        super().__init__(
            f"Invalid {spec}: {reason}",
            {"spec": spec, "reason": reason},
        )


class NonFiniteError(TensorException):
    """Raised when an operation produces NaN or Inf values."""

    def __init__(self, operation: str, count: int) -> None:
        super().__init__(
            f"{operation} produced {count} non-finite value(s)",
            {"operation": operation, "count": count},
        )


class GradientContractError(TensorException):
    """Raised when backward() is called on something that is not a scalar graph root."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"Cannot differentiate: {reason}", {"reason": reason})


# =============================================================================
# Scan Exceptions
# =============================================================================

class ScanException(KMambaException):
    """Base exception for state-space scan errors."""


class InvalidScanOrderError(ScanException):
    """Raised when a scan order is not a permutation of the spatial axes."""

    def __init__(self, permutation: Any) -> None:
        super().__init__(
            f"Scan order {permutation} is not a permutation of (0, 1, 2)",
            {"permutation": str(permutation)},
        )


class ScanDimensionError(ScanException):
    """Raised when scan inputs disagree with the state-space parameters."""

    def __init__(self, what: str, expected: int, actual: int) -> None:
        super().__init__(
            f"Scan {what} mismatch: parameters expect {expected}, input has {actual}",
            {"what": what, "expected": expected, "actual": actual},
        )


# =============================================================================
# KAN Exceptions
# =============================================================================

class KanException(KMambaException):
    """Base exception for spline operator errors."""


class InvalidGridError(KanException):
    """Raised when a knot vector is malformed."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"Malformed spline grid: {reason}", {"reason": reason})


# =============================================================================
# Model Exceptions
# =============================================================================

class ModelException(KMambaException):
    """Base exception for network assembly errors."""


class ScaleShapeError(ModelException):
    """Raised when a feature pyramid violates strict spatial monotonicity."""

    def __init__(self, level: int, reason: str) -> None:
        super().__init__(
            f"Feature pyramid level {level}: {reason}",
            {"level": level, "reason": reason},
        )


class ChannelSplitError(ModelException):
    """Raised when channel-split arithmetic does not add up."""

    def __init__(self, channels: int, reason: str) -> None:
        super().__init__(
            f"Cannot split {channels} channels: {reason}",
            {"channels": channels, "reason": reason},
        )


class IndivisiblePatchError(ModelException):
    """Raised when the input spatial size cannot pass through all encoder stages."""

    def __init__(self, size: Any, divisor: int) -> None:
        super().__init__(
            f"Spatial size {size} must be divisible by {divisor}",
            {"size": str(size), "divisor": divisor},
        )


# =============================================================================
# Loss Exceptions
# =============================================================================

class LossException(KMambaException):
    """Base exception for training objective errors."""


class LabelOutOfRangeError(LossException):
    """Raised when a target label is not a valid class index."""

    def __init__(self, max_label: int, num_classes: int) -> None:
        super().__init__(
            f"Target label {max_label} out of range for {num_classes} classes",
            {"max_label": max_label, "num_classes": num_classes},
        )


# =============================================================================
# Metric Exceptions
# =============================================================================

class MetricException(KMambaException):
    """Base exception for evaluation metric errors."""


class DimensionMismatchError(MetricException):
    """Raised when two label volumes do not share dimensions."""

    def __init__(self, dims_a: Any, dims_b: Any) -> None:
        super().__init__(
            f"Label volumes differ in dimensions: {dims_a} vs {dims_b}",
            {"dims_a": str(dims_a), "dims_b": str(dims_b)},
        )


class UndefinedMetricError(MetricException):
    """Raised when a metric is undefined for the given masks (reported as missing)."""

    def __init__(self, metric: str, cls: Any, reason: str) -> None:
        super().__init__(
            f"{metric} undefined for class {cls}: {reason}",
            {"metric": metric, "class": str(cls), "reason": reason},
        )


# =============================================================================
# Volume Format Exceptions
# =============================================================================

class VolumeFormatException(KMambaException):
    """Base exception for on-disk container errors."""


class BadMagicError(VolumeFormatException):
    """Raised when a file does not start with the expected magic string."""

    def __init__(self, path: str, found: str) -> None:
        super().__init__(
            f"Not a volume file (bad magic): {path}",
            {"path": path, "found": found[:32]},
        )


class TruncatedPayloadError(VolumeFormatException):
    """Raised when the payload length disagrees with the header."""

    def __init__(self, path: str, expected: int, actual: int) -> None:
        super().__init__(
            f"Payload of {path} has {actual} bytes, header announces {expected}",
            {"path": path, "expected": expected, "actual": actual},
        )


class DtypeMismatchError(VolumeFormatException):
    """Raised when a volume's dtype is not the one requested or supported."""

    def __init__(self, path: str, expected: str, actual: str) -> None:
        super().__init__(
            f"Volume {path} has dtype {actual}, expected {expected}",
            {"path": path, "expected": expected, "actual": actual},
        )


class UnsupportedNiftiError(VolumeFormatException):
    """Raised when a NIfTI file uses features outside the supported subset."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(
            f"Unsupported NIfTI file {path}: {reason}",
            {"path": path, "reason": reason},
        )


class CheckpointFormatError(VolumeFormatException):
    """Raised when a checkpoint container is corrupt or incompatible."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(
            f"Invalid checkpoint {path}: {reason}",
            {"path": path, "reason": reason},
        )


class HeaderFormatError(VolumeFormatException):
    """Raised when a volume header line cannot be parsed."""

    def __init__(self, path: str, line: str, reason: str) -> None:
        super().__init__(
            f"Malformed header in {path}: {reason}",
            {"path": path, "line": line[:64], "reason": reason},
        )


class ManifestFormatError(VolumeFormatException):
    """Raised when a dataset manifest record is invalid."""

    def __init__(self, path: str, line_number: int, reason: str) -> None:
        super().__init__(
            f"Invalid manifest record {path}:{line_number}: {reason}",
            {"path": path, "line_number": line_number, "reason": reason},
        )


# =============================================================================
# Data Exceptions
# =============================================================================

class DataException(KMambaException):
    """Base exception for dataset errors."""


class DatasetNotFoundError(DataException):
    """Raised when a dataset directory, manifest or case file is missing."""

    def __init__(self, path: str) -> None:
        super().__init__(f"Dataset path not found: {path}", {"path": path})


class InvalidCropError(DataException):
    """Raised when a crop target exceeds the source dimensions."""

    def __init__(self, crop: Any, source: Any) -> None:
        super().__init__(
            f"Crop size {crop} does not fit source dimensions {source}",
            {"crop": str(crop), "source": str(source)},
        )


class PhantomSizeError(DataException):
    """Raised when a phantom is requested below the minimum size."""

    def __init__(self, size: int, minimum: int) -> None:
        super().__init__(
            f"Phantom size {size} below minimum {minimum}",
            {"size": size, "minimum": minimum},
        )


# =============================================================================
# Configuration Exceptions
# =============================================================================

class ConfigurationException(KMambaException):
    """Base exception for configuration errors."""


class ConfigSyntaxError(ConfigurationException):
    """Raised when a config line is not of the form section.key = value."""

    def __init__(self, line_number: int, line: str) -> None:
        super().__init__(
            f"Malformed config line {line_number}: {line.strip()!r}",
            {"line_number": line_number, "line": line.strip()[:80]},
        )


class MissingConfigurationError(ConfigurationException):
    """Raised when required configuration is missing."""

    def __init__(self, config_key: str) -> None:
        super().__init__(
            f"Missing required configuration: {config_key}",
            {"config_key": config_key},
        )


class InvalidConfigurationError(ConfigurationException):
    """Raised when configuration value is invalid."""

    def __init__(self, config_key: str, value: Any, reason: str) -> None:
        super().__init__(
            f"Invalid configuration for '{config_key}': {reason}",
            {"config_key": config_key, "value": str(value)[:80], "reason": reason},
        )


# =============================================================================
# Training Exceptions
# =============================================================================

class TrainingException(KMambaException):
    """Base exception for optimization errors."""


class NonFiniteGradientError(TrainingException):
    """Raised when a parameter receives a NaN/Inf gradient."""

    def __init__(self, parameter: str, step: int) -> None:
        super().__init__(
            f"Non-finite gradient for parameter '{parameter}' at step {step}",
            {"parameter": parameter, "step": step},
        )


# =============================================================================
# Invariant Exceptions
# =============================================================================

class InvariantViolationError(KMambaException):
    """Raised when a verification run (gradcheck, slope fit) fails its bounds."""

    def __init__(self, check: str, reason: str) -> None:
        super().__init__(
            f"Invariant check '{check}' failed: {reason}",
            {"check": check, "reason": reason},
        )
