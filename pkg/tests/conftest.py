"""
Pytest configuration and shared fixtures for the many-worlds tests.

Provides:
- Config fixtures (small, fast render settings)
- Scene fixtures (analytic scenes from tests.mocks.scenes)
- Image fixtures
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from manyworlds.config import GradConfig, OptConfig, PathConfig  # noqa: E402
from manyworlds.geometry.vec import Aabb  # noqa: E402
from manyworlds.transport.film import Image  # noqa: E402
from tests.mocks import scenes  # noqa: E402


# =============================================================================
# Configuration Fixtures
# =============================================================================

@pytest.fixture
def path_cfg() -> PathConfig:
    """Cheap primal settings: two segments, few samples, small tiles."""
    return PathConfig(k_max=2, spp=8, seed=3, tile_size=16)


@pytest.fixture
def grad_cfg() -> GradConfig:
    """Cheap adjoint settings matching path_cfg."""
    return GradConfig(k_ad=2, grad_spp=8, seed=4)


@pytest.fixture
def opt_cfg(path_cfg, grad_cfg) -> OptConfig:
    """A short optimization with no warmup and no checkpoints."""
    return OptConfig(
        iterations=3,
        warmup_iters=0,
        checkpoint_every=0,
        path=path_cfg,
        gradient=grad_cfg,
    )


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Drop the cached config and settings so tests never see each other's."""
    from manyworlds import config as config_module

    monkeypatch.setattr(config_module, "_config", None)
    monkeypatch.setattr(config_module, "_settings", None)
    for var in ("MW_CONFIG_PATH", "MW_WORKERS", "MW_DETERMINISTIC"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def test_config_dict() -> dict:
    """Minimal configuration dictionary for the YAML loader."""
    return {
        "field": {"resolution": [8, 8, 8], "sigma_voxels": 1.5},
        "optimizer": {
            "iterations": 5,
            "warmup_iters": 2,
            "path": {"k_max": 2, "spp": 4},
            "gradient": {"k_ad": 1, "grad_spp": 2},
        },
        "workers": 2,
        "deterministic": True,
    }


@pytest.fixture
def test_config_file(test_config_dict, tmp_path) -> Path:
    """Write test_config_dict to a temporary YAML file."""
    import yaml

    config_path = tmp_path / "manyworlds.yaml"
    with open(config_path, "w") as f:
        yaml.dump(test_config_dict, f)
    return config_path


# =============================================================================
# Scene Fixtures
# =============================================================================

@pytest.fixture
def unit_box() -> Aabb:
    return scenes.UNIT_BOX


@pytest.fixture
def slab_scene():
    """Slab occupancy model with theta = 0.5 under a white environment."""
    return scenes.slab_scene(theta=0.5)


@pytest.fixture
def plane_scene():
    """Diffuse floor plus a blurred sphere field, 8x8 camera."""
    return scenes.diffuse_plane_scene(resolution=8, size=8)


@pytest.fixture
def sphere_field():
    """Grid field holding a signed distance to a sphere of radius 0.5."""
    return scenes.grid_field(scenes.sphere_mu(radius=0.5), resolution=16)


# =============================================================================
# Image Fixtures
# =============================================================================

@pytest.fixture
def gradient_image() -> Image:
    """4x3 image with distinct values per pixel and channel."""
    px = np.arange(4 * 3 * 3, dtype=np.float64).reshape(3, 4, 3) / 10.0
    return Image(px)


# =============================================================================
# Pytest Configuration
# =============================================================================

def pytest_addoption(parser):
    """Add custom command line options."""
    parser.addoption(
        "--run-integration",
        action="store_true",
        default=False,
        help="Run integration tests (full reconstructions, minutes each)",
    )
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run slow unit tests (many-sample convergence checks)",
    )


def pytest_configure(config):
    """Configure custom markers."""
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow"
    )


def pytest_collection_modifyitems(config, items):
    """Skip integration and slow tests unless their option is passed."""
    skip_integration = pytest.mark.skip(reason="Need --run-integration option to run")
    skip_slow = pytest.mark.skip(reason="Need --run-slow option to run")

    for item in items:
        if "integration" in item.keywords and not config.getoption("--run-integration"):
            item.add_marker(skip_integration)
        if "slow" in item.keywords and not config.getoption("--run-slow"):
            item.add_marker(skip_slow)
