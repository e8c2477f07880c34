"""
Regular scalar grids with a voxel-center layout.

Node (i, j, k) sits at lo + (index + 0.5) * h with h = (hi - lo) / resolution,
so a grid of resolution n covers its bounds with n cells.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from ..geometry.vec import Aabb, as_points


@dataclass
class ScalarGrid:
    """values has shape (nx, ny, nz); bounds is the covered world box."""
    values: np.ndarray
    bounds: Aabb

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"grid values must be 3-D, got shape {self.values.shape}")
        if min(self.values.shape) < 2:
            raise ValueError(f"grid resolution must be >= 2 per axis, got {self.values.shape}")
        if self.bounds.is_degenerate:
            raise ValueError(f"grid bounds are degenerate: {self.bounds}")

    @classmethod
    def constant(cls, resolution: Tuple[int, int, int], bounds: Aabb, value: float) -> "ScalarGrid":
        return cls(np.full(tuple(resolution), float(value)), bounds)

    @classmethod
    def from_function(
        cls,
        resolution: Tuple[int, int, int],
        bounds: Aabb,
        fn: Callable[[np.ndarray], np.ndarray],
    ) -> "ScalarGrid":
        """Sample fn at node positions; fn maps (N, 3) points to (N,) values."""
        pts = node_positions(resolution, bounds)
        return cls(np.asarray(fn(pts.reshape(-1, 3)), dtype=np.float64).reshape(tuple(resolution)), bounds)

    @property
    def resolution(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.values.shape)

    @property
    def spacing(self) -> np.ndarray:
        return voxel_size(self.resolution, self.bounds)

    def positions(self) -> np.ndarray:
        return node_positions(self.resolution, self.bounds)

    def copy(self) -> "ScalarGrid":
        return ScalarGrid(self.values.copy(), self.bounds)


def voxel_size(resolution, bounds: Aabb) -> np.ndarray:
    return bounds.extent / np.asarray(resolution, dtype=np.float64)


def node_positions(resolution, bounds: Aabb) -> np.ndarray:
    """World positions of all nodes, shape (nx, ny, nz, 3)."""
    h = voxel_size(resolution, bounds)
    axes = [bounds.lo[a] + (np.arange(resolution[a]) + 0.5) * h[a] for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def continuous_coords(points, resolution, bounds: Aabb) -> np.ndarray:
    """Unclamped index-space coordinates u = (x - lo) / h - 0.5, shape (N, 3)."""
    p = as_points(points)
    h = voxel_size(resolution, bounds)
    return (p - bounds.lo_array) / h - 0.5
