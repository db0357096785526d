"""
Integration test configuration and fixtures.

Provides an on-disk phantom dataset and run-config file shared by the
command-line tests.
"""

import logging
from pathlib import Path

import pytest

from kmamba.core.config import ModelConfig, RunConfig, TrainConfig
from kmamba.infrastructure.data.dataset import generate_dataset

logger = logging.getLogger(__name__)


# =============================================================================
# Dataset Setup
# =============================================================================

@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """
    Write four 16^3 phantoms, one of them in the val split.

    Returns:
        Dataset root containing the manifest
    """
    root = tmp_path_factory.mktemp("phantoms")
    logger.info(f"Creating test dataset: {root}")
    generate_dataset(root, n=4, size=16, seed=0, val_fraction=0.25)
    return root


# =============================================================================
# Run Configuration Setup
# =============================================================================

@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    """
    Two-step float64 run on the tiny network.
    """
    model = ModelConfig(stage_channels=(2, 3, 4, 5, 6), kan_hidden=4, kan_grid=4,
                        d_state=4, patch_size=16)
    train = TrainConfig(steps=2, batch_size=2, precision="float64", checkpoint_every=1,
                        log_every=1, scan_chunk=64)
    return RunConfig(model=model, train=train)


@pytest.fixture(scope="session")
def config_file(tmp_path_factory, run_config: RunConfig) -> Path:
    """
    The run config written in key = value form.
    """
    path = tmp_path_factory.mktemp("configs") / "run.cfg"
    run_config.write(path)
    return path


@pytest.fixture(scope="session")
def trained_dir(tmp_path_factory, dataset_dir: Path, config_file: Path) -> Path:
    """
    Output directory of one ``train`` command.
    """
    from kmamba.main import EXIT_OK, main

    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--config", str(config_file), "--data", str(dataset_dir),
                 "--out", str(out)]) == EXIT_OK
    return out
