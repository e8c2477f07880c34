"""
Configuration loader for the many-worlds renderer.

Parses and validates config/manyworlds.yaml using Pydantic models. The same
models validate the JSON config files handed to the command-line driver.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


# Default config path
DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / "config" / "manyworlds.yaml"

Triple = Tuple[float, float, float]


class PathConfig(BaseModel):
    """Primal path tracing settings."""
    model_config = ConfigDict(extra="forbid")

    k_max: int = Field(default=2, ge=1, description="Maximum path depth in segments")
    spp: int = Field(default=128, ge=1, description="Samples per pixel")
    seed: int = Field(default=0, ge=0, lt=2**64)
    world_samples: int = Field(default=1, ge=1, description="Stratified many-worlds samples per selected segment")
    ray_epsilon: float = Field(default=1e-4, gt=0, description="Secondary-ray offset as a fraction of the scene diagonal")
    tile_size: int = Field(default=256, ge=1, description="Pixels per work tile")


class GradConfig(BaseModel):
    """Adjoint (derivative propagation) pass settings."""
    model_config = ConfigDict(extra="forbid")

    grad_spp: int = Field(default=32, ge=1)
    k_ad: int = Field(default=2, ge=1, description="Segments (counted from the camera) that emit many-worlds gradients")
    detach_beta: bool = False
    relative_motion: bool = True
    seed: int = Field(default=1, ge=0, lt=2**64)
    scale_by_segment: bool = False
    surface_albedo_gradients: bool = False
    clip_norm: Optional[float] = Field(default=None, gt=0)


class FieldConfig(BaseModel):
    """Occupancy grid layout and initialization."""
    model_config = ConfigDict(extra="forbid")

    resolution: Tuple[int, int, int] = (32, 32, 32)
    bounds: Tuple[Triple, Triple] = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    sigma: Optional[float] = Field(default=None, gt=0, description="Fixed std of the implicit function; None = sigma_voxels voxel widths")
    sigma_voxels: float = Field(default=2.0, gt=0)
    init_mu_sigmas: float = Field(default=2.0, description="Initial constant mu in units of sigma (+2 = empty space)")
    facing: Literal["opposes_ray", "along_ray"] = "opposes_ray"

    @model_validator(mode="after")
    def _check_layout(self) -> "FieldConfig":
        if min(self.resolution) < 2:
            raise ValueError("field resolution must be >= 2 per axis")
        lo, hi = self.bounds
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("field bounds must be non-degenerate")
        return self


class OptConfig(BaseModel):
    """Reconstruction loop settings."""
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=0.02, gt=0, description="Step size in units of sigma")
    albedo_learning_rate: float = Field(default=0.02, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    iterations: int = Field(default=300, ge=0)
    warmup_iters: int = Field(default=10, ge=0, description="Leading iterations without momentum")
    views_per_iteration: Literal["all", "random"] = "all"
    seed: int = Field(default=0, ge=0, lt=2**64)
    seed_schedule: Literal["per_iteration", "fixed"] = "per_iteration"
    loss: Literal["l2", "l1"] = "l2"
    path: PathConfig = Field(default_factory=PathConfig)
    gradient: GradConfig = Field(default_factory=GradConfig)
    checkpoint_every: int = Field(default=25, ge=0, description="0 disables periodic checkpoints")
    optimize_albedo: bool = True
    divergence_factor: float = Field(default=10.0, gt=1)
    divergence_patience: int = Field(default=20, ge=1)

    @model_validator(mode="after")
    def _check_schedule(self) -> "OptConfig":
        if self.warmup_iters > self.iterations:
            raise ValueError("warmup_iters must not exceed iterations")
        if self.gradient.k_ad > self.path.k_max:
            raise ValueError("gradient.k_ad must not exceed path.k_max")
        return self


class ManyWorldsConfig(BaseModel):
    """Root configuration model."""
    model_config = ConfigDict(extra="forbid")

    field: FieldConfig = Field(default_factory=FieldConfig)
    optimizer: OptConfig = Field(default_factory=OptConfig)
    workers: int = Field(default=1, ge=1)
    deterministic: bool = True


class Settings(BaseSettings):
    """Environment-based settings (MW_* variables, optional .env file)."""
    model_config = SettingsConfigDict(
        env_prefix="MW_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    config_path: Optional[str] = None
    workers: Optional[int] = None
    deterministic: Optional[bool] = None
    log_level: str = "INFO"


# Global config instance (lazy loaded)
_config: Optional[ManyWorldsConfig] = None
_settings: Optional[Settings] = None


def load_config(config_path: Optional[Union[Path, str]] = None) -> ManyWorldsConfig:
    """Load and validate configuration from a YAML file."""
    global _config

    if config_path is None:
        config_path = os.environ.get("MW_CONFIG_PATH", DEFAULT_CONFIG_PATH)

    config_path = Path(config_path)

    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, "r") as f:
        raw_config = yaml.safe_load(f) or {}

    _config = ManyWorldsConfig.model_validate(raw_config)
    return _config


def get_config() -> ManyWorldsConfig:
    """Get the current configuration (loads if not already loaded)."""
    global _config
    if _config is None:
        _config = load_config()
    return _config


def get_settings() -> Settings:
    """Get environment settings."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit request, then MW_WORKERS, then the config file."""
    if requested is not None:
        return max(1, requested)
    settings = get_settings()
    if settings.workers is not None:
        return max(1, settings.workers)
    return get_config().workers


def resolve_deterministic(requested: Optional[bool] = None) -> bool:
    """Fixed-order gradient reduction: explicit flag, then MW_DETERMINISTIC, then the config file."""
    if requested is not None:
        return requested
    settings = get_settings()
    if settings.deterministic is not None:
        return settings.deterministic
    return get_config().deterministic


def merge_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; nested sections in `overrides` replace only the keys they name."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = value
    return merged
