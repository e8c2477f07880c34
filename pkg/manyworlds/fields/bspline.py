"""
Uniform cubic B-spline stencils on voxel-center grids.

The interpolant is C2 inside the grid, reproduces linear functions away from
the border and forms a partition of unity everywhere. Out-of-bounds points
clamp to the border, where the spatial derivative is zero.

Interpolation and scatter share one stencil so scatter is the exact transpose.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..geometry.vec import Aabb
from .grid import continuous_coords, voxel_size


def bspline_weights(f: np.ndarray) -> np.ndarray:
    """Weights for nodes i-1 .. i+2 at fractional offset f in [0, 1]; shape (N, 4)."""
    f2 = f * f
    f3 = f2 * f
    return np.stack([
        (1.0 - f) ** 3 / 6.0,
        (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
        (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
        f3 / 6.0,
    ], axis=-1)


def bspline_derivative_weights(f: np.ndarray) -> np.ndarray:
    """d/df of bspline_weights."""
    f2 = f * f
    return np.stack([
        -0.5 * (1.0 - f) ** 2,
        1.5 * f2 - 2.0 * f,
        -1.5 * f2 + f + 0.5,
        0.5 * f2,
    ], axis=-1)


@dataclass
class Stencil:
    """Per-axis node indices and weights for N query points."""
    idx: Tuple[np.ndarray, np.ndarray, np.ndarray]
    w: Tuple[np.ndarray, np.ndarray, np.ndarray]
    # Derivatives w.r.t. world coordinates (1/h applied, zero where clamped).
    dw: Tuple[np.ndarray, np.ndarray, np.ndarray]
    resolution: Tuple[int, int, int]

    def flat_indices(self) -> np.ndarray:
        """(N, 64) raveled node indices, x-major."""
        ix, iy, iz = self.idx
        _, ny, nz = self.resolution
        flat = ix[:, :, None, None] * (ny * nz) + iy[:, None, :, None] * nz + iz[:, None, None, :]
        return flat.reshape(len(ix), 64)

    def weights(self) -> np.ndarray:
        wx, wy, wz = self.w
        return (wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]).reshape(len(wx), 64)

    def gradient_weights(self) -> np.ndarray:
        """(N, 64, 3) d weight / d x for each node."""
        wx, wy, wz = self.w
        dx, dy, dz = self.dw
        n = len(wx)
        gx = dx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]
        gy = wx[:, :, None, None] * dy[:, None, :, None] * wz[:, None, None, :]
        gz = wx[:, :, None, None] * wy[:, None, :, None] * dz[:, None, None, :]
        return np.stack([gx.reshape(n, 64), gy.reshape(n, 64), gz.reshape(n, 64)], axis=-1)


def cubic_stencil(points, resolution, bounds: Aabb) -> Stencil:
    u = continuous_coords(points, resolution, bounds)
    h = voxel_size(resolution, bounds)
    idx, w, dw = [], [], []
    for a in range(3):
        n = int(resolution[a])
        ua = np.clip(u[:, a], 0.0, n - 1.0)
        base = np.clip(np.floor(ua), 0, n - 2).astype(np.int64)
        f = ua - base
        inside = (u[:, a] >= 0.0) & (u[:, a] <= n - 1.0)
        idx.append(np.clip(base[:, None] + np.arange(-1, 3)[None, :], 0, n - 1))
        w.append(bspline_weights(f))
        dw.append(bspline_derivative_weights(f) * (inside / h[a])[:, None])
    return Stencil(tuple(idx), tuple(w), tuple(dw), tuple(int(r) for r in resolution))


def interpolate(values: np.ndarray, st: Stencil) -> np.ndarray:
    return np.einsum("nk,nk->n", values.ravel()[st.flat_indices()], st.weights())


def interpolate_gradient(values: np.ndarray, st: Stencil) -> np.ndarray:
    return np.einsum("nk,nkc->nc", values.ravel()[st.flat_indices()], st.gradient_weights())


def scatter(target: np.ndarray, st: Stencil, node_weights: np.ndarray) -> None:
    """target.ravel()[node] += node_weights for every stencil entry; target is modified in place."""
    flat = target.reshape(-1)
    np.add.at(flat, st.flat_indices().ravel(), node_weights.ravel())
