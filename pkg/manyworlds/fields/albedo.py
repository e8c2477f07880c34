"""Spatially varying RGB albedo on a voxel-center grid, trilinear with clamp."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..geometry.vec import Aabb, as_points
from .gradients import GradientBuffer, require_finite
from .grid import continuous_coords

ALBEDO_MIN = 0.001
ALBEDO_MAX = 1.0


@dataclass
class AlbedoGrid:
    values: np.ndarray  # (nx, ny, nz, 3)
    bounds: Aabb

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 4 or self.values.shape[3] != 3:
            raise ValueError(f"albedo grid must be (nx, ny, nz, 3), got {self.values.shape}")
        if min(self.values.shape[:3]) < 2:
            raise ValueError("albedo grid resolution must be >= 2 per axis")
        if self.bounds.is_degenerate:
            raise ValueError(f"albedo grid bounds are degenerate: {self.bounds}")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("albedo values must lie in [0, 1]")

    @classmethod
    def constant(cls, resolution: Tuple[int, int, int], bounds: Aabb, rgb) -> "AlbedoGrid":
        values = np.empty(tuple(resolution) + (3,))
        values[...] = np.asarray(rgb, dtype=np.float64)
        return cls(values, bounds)

    @property
    def resolution(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.values.shape[:3])

    def clamp(self, lo: float = ALBEDO_MIN, hi: float = ALBEDO_MAX) -> None:
        np.clip(self.values, lo, hi, out=self.values)


def _trilinear(grid: AlbedoGrid, points):
    """Flat corner indices (N, 8) and weights (N, 8)."""
    res = grid.resolution
    u = continuous_coords(points, res, grid.bounds)
    base, frac = [], []
    for a in range(3):
        ua = np.clip(u[:, a], 0.0, res[a] - 1.0)
        i0 = np.clip(np.floor(ua), 0, res[a] - 2).astype(np.int64)
        base.append(i0)
        frac.append(ua - i0)
    _, ny, nz = res
    idx, w = [], []
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                idx.append((base[0] + dx) * (ny * nz) + (base[1] + dy) * nz + (base[2] + dz))
                w.append(
                    (frac[0] if dx else 1.0 - frac[0])
                    * (frac[1] if dy else 1.0 - frac[1])
                    * (frac[2] if dz else 1.0 - frac[2])
                )
    return np.stack(idx, axis=1), np.stack(w, axis=1)


def albedo_at(grid: AlbedoGrid, x) -> np.ndarray:
    """RGB albedo, (N, 3) for a batch or (3,) for a single point."""
    p = as_points(x)
    idx, w = _trilinear(grid, p)
    rgb = np.einsum("nk,nkc->nc", w, grid.values.reshape(-1, 3)[idx])
    return rgb[0] if np.asarray(x).ndim == 1 else rgb


def scatter_albedo_gradient(buf: GradientBuffer, grid: AlbedoGrid, x, g) -> None:
    """buf.d_albedo += transpose of albedo_at applied to the RGB adjoint g."""
    if buf.d_albedo is None:
        raise ValueError("gradient buffer has no albedo slot")
    p = as_points(x)
    g = np.broadcast_to(np.asarray(g, dtype=np.float64), (len(p), 3))
    require_finite(g, "albedo gradient")
    idx, w = _trilinear(grid, p)
    flat = buf.d_albedo.reshape(-1, 3)
    for c in range(3):
        np.add.at(flat[:, c], idx.ravel(), (w * g[:, c:c + 1]).ravel())
