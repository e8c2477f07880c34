"""Many-worlds representation: occupancy, orientation, albedo and their adjoints."""

from .albedo import AlbedoGrid, albedo_at, scatter_albedo_gradient
from .checkpoint import GridFile, load_grid, save_grid
from .gradients import GradientBuffer
from .grid import ScalarGrid
from .occupancy import (
    OccupancyField,
    OccupancyModel,
    alpha_at,
    alpha_plus,
    beta_at,
    mu_at,
    scatter_alpha_gradient,
    scatter_beta_gradient,
)

__all__ = [
    "AlbedoGrid",
    "GradientBuffer",
    "GridFile",
    "OccupancyField",
    "OccupancyModel",
    "ScalarGrid",
    "albedo_at",
    "alpha_at",
    "alpha_plus",
    "beta_at",
    "load_grid",
    "mu_at",
    "save_grid",
    "scatter_albedo_gradient",
    "scatter_alpha_gradient",
    "scatter_beta_gradient",
]
