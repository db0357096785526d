"""
Pytest configuration and shared fixtures for MSD-KMamba tests.
"""

import os
import tempfile
from collections.abc import Generator
from pathlib import Path

import numpy as np
import pytest

from kmamba.core.config import ModelConfig, RunConfig, TrainConfig
from kmamba.core.domain.phantom import Phantom
from kmamba.engine.tensor import default_dtype
from kmamba.infrastructure.data.phantom import generate_phantom

# =============================================================================
# Environment and configuration fixtures
# =============================================================================

@pytest.fixture(scope="session", autouse=True)
def setup_test_environment() -> None:
    """
    Setup test environment variables.
    """
    os.environ["KMAMBA_LOG_LEVEL"] = "WARNING"
    os.environ["KMAMBA_THREADS"] = "1"


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """
    Create a temporary directory for test files.
    """
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def float64() -> Generator[None, None, None]:
    """
    Run the test with double-precision parameters and tensors.
    """
    with default_dtype("float64"):
        yield


@pytest.fixture
def rng() -> np.random.Generator:
    """
    Fixed-seed random generator.
    """
    return np.random.default_rng(1234)


# =============================================================================
# Model and run configuration fixtures
# =============================================================================

@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """
    Smallest network that still has five levels and every component.
    """
    return ModelConfig(
        in_channels=4,
        num_classes=4,
        stage_channels=(2, 3, 4, 5, 6),
        kan_hidden=4,
        kan_grid=4,
        d_state=4,
        patch_size=16,
    )


@pytest.fixture
def tiny_run_config(tiny_model_config: ModelConfig) -> RunConfig:
    """
    Short float64 run on 16^3 phantoms.
    """
    train = TrainConfig(steps=3, precision="float64", checkpoint_every=2, log_every=1,
                        scan_chunk=64)
    return RunConfig(model=tiny_model_config, train=train)


# =============================================================================
# Data fixtures
# =============================================================================

@pytest.fixture
def phantom() -> Phantom:
    """
    One 16^3 phantom with four modalities.
    """
    return generate_phantom(seed=3, size=16)


@pytest.fixture
def phantoms() -> list[Phantom]:
    """
    Four 16^3 phantoms with consecutive seeds.
    """
    return [generate_phantom(seed=s, size=16) for s in range(4)]


# =============================================================================
# Markers for organizing tests
# =============================================================================

def pytest_configure(config):
    """
    Register custom markers.
    """
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "acceptance: Desk-scale acceptance checks")
    config.addinivalue_line("markers", "slow: Slow tests")


def pytest_collection_modifyitems(config, items):
    """
    Mark tests by directory so ``-m unit`` and ``-m integration`` select them.
    """
    for item in items:
        parts = Path(str(item.fspath)).parts
        if "unit" in parts:
            item.add_marker(pytest.mark.unit)
        elif "integration" in parts:
            item.add_marker(pytest.mark.integration)
