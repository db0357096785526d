"""
Unit tests for process settings and run-config files.
"""

import logging
from pathlib import Path

import pytest

from kmamba.core.config import (
    ModelConfig,
    RunConfig,
    Settings,
    get_settings,
    load_run_config,
    parse_run_config,
)
from kmamba.core.exceptions import (
    ConfigSyntaxError,
    DatasetNotFoundError,
    InvalidConfigurationError,
)


# =============================================================================
# Settings
# =============================================================================

class TestSettings:
    """Tests for Settings."""

    def test_environment_prefix(self, monkeypatch):
        """Test KMAMBA_ variables override defaults."""
        monkeypatch.setenv("KMAMBA_PRECISION", "float64")
        monkeypatch.setenv("KMAMBA_THREADS", "4")
        settings = Settings()
        assert settings.PRECISION == "float64"
        assert settings.THREADS == 4

    def test_fields(self):
        """Test settings carry only the process knobs the package reads."""
        assert set(Settings.model_fields) == {"LOG_LEVEL", "LOG_FORMAT", "THREADS", "PRECISION"}

    def test_unknown_variable_ignored(self, monkeypatch):
        """Test stray KMAMBA_ variables neither fail nor surface as attributes."""
        monkeypatch.setenv("KMAMBA_ENVIRONMENT", "production")
        settings = Settings()
        assert not hasattr(settings, "ENVIRONMENT")
        assert settings.LOG_LEVEL == "WARNING"

    def test_invalid_threads(self, monkeypatch):
        """Test thread counts below one are rejected."""
        monkeypatch.setenv("KMAMBA_THREADS", "0")
        with pytest.raises(ValueError):
            Settings()

    def test_json_logging(self, monkeypatch):
        """Test the json format installs a JSON formatter on the root handler."""
        from pythonjsonlogger import jsonlogger

        monkeypatch.setenv("KMAMBA_LOG_FORMAT", "json")
        Settings().configure_logging()
        handler = logging.getLogger().handlers[0]
        assert isinstance(handler.formatter, jsonlogger.JsonFormatter)
        Settings(LOG_FORMAT="text").configure_logging()

    def test_get_settings_cached(self):
        """Test get_settings returns one instance."""
        get_settings.cache_clear()
        assert get_settings() is get_settings()
        get_settings.cache_clear()


# =============================================================================
# Sections
# =============================================================================

class TestModelConfig:
    """Tests for ModelConfig validation."""

    def test_defaults(self):
        """Test desk-scale defaults."""
        cfg = ModelConfig()
        assert cfg.stage_channels == (8, 16, 32, 64, 128)
        assert cfg.bkm_stages == (4, 5)
        assert cfg.patch_size == 64

    def test_comma_separated_widths(self):
        """Test widths may be given as a comma-separated string."""
        assert ModelConfig(stage_channels="2, 3,4,5,6").stage_channels == (2, 3, 4, 5, 6)

    @pytest.mark.parametrize("widths", ["8,16,32,64", "8,8,32,64,128", "0,1,2,3,4"])
    def test_invalid_widths(self, widths):
        """Test widths must be five strictly increasing positives."""
        with pytest.raises(ValueError):
            ModelConfig(stage_channels=widths)

    def test_patch_divisible_by_sixteen(self):
        """Test patch sizes survive four halvings."""
        with pytest.raises(ValueError):
            ModelConfig(patch_size=40)

    def test_unknown_key(self):
        """Test extra keys are forbidden."""
        with pytest.raises(ValueError):
            ModelConfig(width=3)  # type: ignore[call-arg]


# =============================================================================
# Run-config files
# =============================================================================

class TestRunConfigFile:
    """Tests for parse_run_config, load_run_config and serialization."""

    def test_parse_sections(self):
        """Test keys land in their sections with comments and blanks skipped."""
        text = """
        # desk run
        model.stage_channels = 2,3,4,5,6
        model.use_mda = false
        loss.beta = 0.25   # mostly dice
        train.steps = 12
        augment.crop =
        """
        cfg = parse_run_config(text)
        assert cfg.model.stage_channels == (2, 3, 4, 5, 6)
        assert cfg.model.use_mda is False
        assert cfg.loss.beta == 0.25
        assert cfg.train.steps == 12
        assert cfg.augment.crop is None
        assert cfg.distill.alpha == 0.5

    def test_round_trip_through_lines(self, tiny_run_config: RunConfig):
        """Test written lines parse back to an equal config."""
        assert parse_run_config("\n".join(tiny_run_config.to_lines())) == tiny_run_config

    def test_write_and_load(self, temp_dir: Path, tiny_run_config: RunConfig):
        """Test a written file loads back."""
        path = temp_dir / "run.cfg"
        tiny_run_config.write(path)
        assert load_run_config(path) == tiny_run_config

    @pytest.mark.parametrize("line", ["model.steps", "steps = 3", "a.b.c = 1", ".x = 1"])
    def test_syntax_errors(self, line):
        """Test malformed lines raise with their line number."""
        with pytest.raises(ConfigSyntaxError) as exc:
            parse_run_config(f"train.steps = 2\n{line}")
        assert exc.value.details["line_number"] == 2

    def test_unknown_section(self):
        """Test an unknown section is a configuration error."""
        with pytest.raises(InvalidConfigurationError):
            parse_run_config("optimizer.lr = 0.1")

    def test_invalid_value_names_key(self):
        """Test constraint violations report the dotted key."""
        with pytest.raises(InvalidConfigurationError) as exc:
            parse_run_config("loss.beta = 1.5")
        assert exc.value.details["config_key"] == "loss.beta"

    def test_missing_file(self, temp_dir: Path):
        """Test a missing file raises DatasetNotFoundError."""
        with pytest.raises(DatasetNotFoundError):
            load_run_config(temp_dir / "absent.cfg")

    def test_with_override(self):
        """Test a dotted override replaces one value and revalidates."""
        cfg = RunConfig().with_override("distill.alpha", "0.9")
        assert cfg.distill.alpha == 0.9
        assert cfg.model == ModelConfig()
        with pytest.raises(InvalidConfigurationError):
            RunConfig().with_override("alpha", "0.9")
        with pytest.raises(InvalidConfigurationError):
            RunConfig().with_override("distill.alpha", "2")
