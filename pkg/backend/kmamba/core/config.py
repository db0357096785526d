"""
Configuration using Pydantic Settings and validated run-config files.

Two layers:
- ``Settings``: process-wide knobs from environment variables (``KMAMBA_*``)
- ``RunConfig``: one experiment, read from a plain-text ``section.key = value`` file
"""

import logging
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from kmamba.core.exceptions import (
    ConfigSyntaxError,
    DatasetNotFoundError,
    InvalidConfigurationError,
)

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Process settings loaded from environment variables.

    Configuration priority:
    1. Environment variables (prefix ``KMAMBA_``)
    2. .env file
    3. Default values
    """

    model_config = SettingsConfigDict(
        env_prefix="KMAMBA_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # =========================================================================
    # Logging
    # =========================================================================

    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        description="Logging level",
    )

    LOG_FORMAT: Literal["text", "json"] = Field(
        default="text",
        description="Log record format on stderr",
    )

    # =========================================================================
    # Compute
    # =========================================================================

    THREADS: int = Field(
        default=1,
        description="Maximum worker threads for data generation and loading",
        ge=1,
        le=256,
    )

    PRECISION: Literal["float32", "float64"] = Field(
        default="float32",
        description="Default floating dtype for training and benchmarks",
    )

    # =========================================================================
    # Methods
    # =========================================================================

    def configure_logging(self) -> None:
        """Configure the root logger from LOG_LEVEL and LOG_FORMAT."""
        log_level = getattr(logging, self.LOG_LEVEL)

        handler = logging.StreamHandler(sys.stderr)
        if self.LOG_FORMAT == "json":
            from pythonjsonlogger import jsonlogger

            handler.setFormatter(
                jsonlogger.JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s")
            )
        else:
            handler.setFormatter(
                logging.Formatter(
                    "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                    datefmt="%Y-%m-%d %H:%M:%S",
                )
            )

        logging.basicConfig(level=log_level, handlers=[handler], force=True)

        logger.debug(f"Logging configured: {self.LOG_LEVEL} ({self.LOG_FORMAT})")


@lru_cache
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Returns:
        Settings singleton

    Note:
        Uses lru_cache for singleton pattern - settings are loaded once
    """
    settings = Settings()
    settings.configure_logging()
    logger.debug(f"Settings loaded: {settings.model_dump()}")
    return settings


# =============================================================================
# Run configuration sections
# =============================================================================

def _split_csv(value: Any) -> Any:
    """Accept ``8,16,32`` style strings for sequence fields."""
    if value is None:
        return []
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    if isinstance(value, int):
        return [value]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True, frozen=True)


class ModelConfig(_Section):
    """Network shape and ablation switches."""

    in_channels: int = Field(default=4, ge=1, description="Input modalities")
    num_classes: int = Field(default=4, ge=2, description="Output classes C")
    stage_channels: tuple[int, ...] = Field(
        default=(8, 16, 32, 64, 128),
        description="Channel width per encoder stage",
    )
    bkm_stages: tuple[int, ...] = Field(
        default=(4, 5),
        description="1-based encoder stages that use the BKM block",
    )
    kan_hidden: int = Field(default=64, ge=1, description="KAN hidden width Q")
    kan_grid: int = Field(default=8, ge=1, description="Spline intervals over the grid range")
    kan_range: float = Field(default=3.0, gt=0.0, description="Grid covers [-range, range]")
    d_state: int = Field(default=16, ge=1, description="SSM state size")
    patch_size: int = Field(default=64, ge=16, description="Cubic training patch edge")
    hsa_expand: float = Field(default=2.0, gt=0.0, description="HSA projection expansion")
    use_hsa: bool = True
    use_bkm: bool = True
    use_mda: bool = True

    @field_validator("stage_channels", "bkm_stages", mode="before")
    @classmethod
    def split_sequences(cls, v: Any) -> Any:
        """Accept comma-separated strings."""
        return _split_csv(v)

    @field_validator("stage_channels")
    @classmethod
    def validate_stage_channels(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """Five strictly increasing positive widths."""
        if len(v) != 5:
            raise ValueError(f"expected 5 stage widths, got {len(v)}")
        if any(c < 1 for c in v):
            raise ValueError("stage widths must be positive")
        if any(b <= a for a, b in zip(v, v[1:], strict=False)):
            raise ValueError("stage widths must be strictly increasing")
        return v

    @field_validator("bkm_stages")
    @classmethod
    def validate_bkm_stages(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """Stage indices are 1-based and unique."""
        if any(s < 1 or s > 5 for s in v):
            raise ValueError("bkm stages must lie in 1..5")
        return tuple(sorted(set(v)))

    @field_validator("patch_size")
    @classmethod
    def validate_patch_size(cls, v: int) -> int:
        """Patch must survive four stride-2 downsamplings."""
        if v % 16 != 0:
            raise ValueError("patch size must be divisible by 16")
        return v


class LossWeights(_Section):
    """Weights of the origin loss (beta) and the total objective (lambda1, lambda2)."""

    beta: float = Field(default=0.5, ge=0.0, le=1.0)
    lambda1: float = Field(default=1.0, ge=0.0)
    lambda2: float = Field(default=0.1, ge=0.0)


class DistillConfig(_Section):
    """Self-distillation mixing and smoothing."""

    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    stop_gradient_teacher: bool = True
    epsilon: float = Field(default=1e-7, gt=0.0)


class TrainConfig(_Section):
    """Optimization loop parameters."""

    steps: int = Field(default=500, ge=1)
    batch_size: int = Field(default=2, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    seed: int = Field(default=7, ge=0)
    precision: Literal["float32", "float64"] = "float32"
    checkpoint_every: int = Field(default=100, ge=0, description="0 disables periodic checkpoints")
    log_every: int = Field(default=10, ge=1)
    scan_chunk: int = Field(default=256, ge=1)


class AugmentConfig(_Section):
    """Training-time augmentation."""

    flip: bool = True
    crop: Optional[int] = Field(default=None, ge=1, description="Cubic crop edge, empty for none")
    noise_sigma: float = Field(default=0.0, ge=0.0)


class DataConfig(_Section):
    """Case loading options."""

    normalize: bool = True


_SECTIONS: dict[str, type[_Section]] = {
    "model": ModelConfig,
    "loss": LossWeights,
    "distill": DistillConfig,
    "train": TrainConfig,
    "augment": AugmentConfig,
    "data": DataConfig,
}


class RunConfig(_Section):
    """
    Complete experiment configuration.

    Serialized as ``section.key = value`` lines; see ``load_run_config``.
    """

    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossWeights = Field(default_factory=LossWeights)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    data: DataConfig = Field(default_factory=DataConfig)

    @classmethod
    def from_pairs(cls, pairs: dict[str, dict[str, Any]]) -> "RunConfig":
        """
        Build a config from ``{section: {key: raw_value}}``.

        Raises:
            InvalidConfigurationError: Unknown section/key or constraint violation
        """
        sections: dict[str, _Section] = {}
        for name, values in pairs.items():
            section_cls = _SECTIONS.get(name)
            if section_cls is None:
                raise InvalidConfigurationError(name, values, "unknown section")
            try:
                sections[name] = section_cls(**values)
            except ValidationError as e:
                error = e.errors()[0]
                key = ".".join([name, *(str(p) for p in error["loc"])])
                raw = values.get(str(error["loc"][0]), "") if error["loc"] else ""
                raise InvalidConfigurationError(key, raw, error["msg"]) from e
        return cls(**sections)

    def with_override(self, dotted_key: str, raw_value: str) -> "RunConfig":
        """
        Return a copy with one ``section.key`` replaced.

        Used by hyper-parameter sweeps.
        """
        section, _, key = dotted_key.partition(".")
        if not key:
            raise InvalidConfigurationError(dotted_key, raw_value, "expected section.key")
        pairs = self.to_pairs()
        if section not in pairs:
            raise InvalidConfigurationError(dotted_key, raw_value, "unknown section")
        pairs[section][key] = _parse_value(raw_value)
        return RunConfig.from_pairs(pairs)

    def to_pairs(self) -> dict[str, dict[str, Any]]:
        """Nested plain-dict form."""
        return {name: getattr(self, name).model_dump() for name in _SECTIONS}

    def to_lines(self) -> list[str]:
        """Serialize to ``section.key = value`` lines (reloadable)."""
        lines = []
        for section, values in self.to_pairs().items():
            for key, value in values.items():
                lines.append(f"{section}.{key} = {_format_value(value)}")
        return lines

    def write(self, path: Path) -> None:
        """Write the config file."""
        path.write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")


# =============================================================================
# File format
# =============================================================================

def _parse_value(raw: str) -> Any:
    value = raw.strip()
    if value == "":
        return None
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    return value


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def parse_run_config(text: str) -> RunConfig:
    """
    Parse run-config text.

    Args:
        text: File contents; ``#`` starts a comment, blank lines are skipped

    Returns:
        Validated RunConfig

    Raises:
        ConfigSyntaxError: Line not of the form ``section.key = value``
        InvalidConfigurationError: Unknown key or invalid value
    """
    pairs: dict[str, dict[str, Any]] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        name, sep, raw = content.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot or not section or not key.strip() or "." in key:
            raise ConfigSyntaxError(line_number, line)
        pairs.setdefault(section, {})[key.strip()] = _parse_value(raw)
    return RunConfig.from_pairs(pairs)


def load_run_config(path: Path) -> RunConfig:
    """
    Load a run-config file.

    Raises:
        DatasetNotFoundError: File does not exist
        ConfigSyntaxError / InvalidConfigurationError: As ``parse_run_config``
    """
    if not path.is_file():
        raise DatasetNotFoundError(str(path))
    config = parse_run_config(path.read_text(encoding="utf-8"))
    logger.info(f"Run config loaded from {path}")
    return config
