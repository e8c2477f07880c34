"""Reconstruction quality metrics."""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from ..errors import DimensionMismatchError, OpenMeshError
from ..geometry.bvh import build_accelerator
from ..geometry.mesh import TriangleMesh
from ..geometry.vec import Aabb, RayBatch
from ..transport.film import Image

logger = logging.getLogger(__name__)

# Keeps scanlines off the edges and vertices of axis-aligned meshes.
SCANLINE_JITTER = (1.3141e-6, 2.7183e-6)
MAX_CROSSINGS = 256


def voxelize(mesh: TriangleMesh, bounds: Aabb, resolution: int) -> np.ndarray:
    """
    Inside test at voxel centers by ray parity along +x scanlines.

    Returns a boolean (resolution,)*3 array indexed [x, y, z].
    """
    n = int(resolution)
    if mesh.is_empty:
        return np.zeros((n, n, n), dtype=bool)
    lo, hi = bounds.lo_array, bounds.hi_array
    h = (hi - lo) / n
    centers = [lo[a] + (np.arange(n) + 0.5) * h[a] for a in range(3)]

    yy, zz = np.meshgrid(centers[1], centers[2], indexing="ij")
    rows = yy.size
    start_x = lo[0] - h[0]
    origins = np.stack([
        np.full(rows, start_x),
        yy.ravel() + SCANLINE_JITTER[0] * h[1],
        zz.ravel() + SCANLINE_JITTER[1] * h[2],
    ], axis=1)
    directions = np.tile([1.0, 0.0, 0.0], (rows, 1))
    step = 1e-9 * float(np.linalg.norm(hi - lo))

    accel = build_accelerator(mesh)
    t_min = np.zeros(rows)
    active = np.ones(rows, dtype=bool)
    crossings = []
    while np.any(active) and len(crossings) < MAX_CROSSINGS:
        idx = np.nonzero(active)[0]
        hits = accel.intersect(RayBatch(origins[idx], directions[idx], t_min[idx], np.full(len(idx), np.inf)))
        t = np.full(rows, np.inf)
        t[idx] = hits.t
        crossings.append(t)
        active = np.isfinite(t)
        t_min[active] = t[active] + step

    ts = np.stack(crossings, axis=1)
    x_t = centers[0] - start_x
    count = (ts[:, None, :] < x_t[None, :, None]).sum(axis=2)  # (rows, nx)
    inside = (count % 2 == 1).reshape(n, n, n)  # [y, z, x]
    return np.transpose(inside, (2, 0, 1))


def mesh_iou(mesh_a: TriangleMesh, mesh_b: TriangleMesh, resolution: int = 64, bounds: Optional[Aabb] = None) -> float:
    """
    Volumetric intersection over union of two closed meshes.

    Both meshes are voxelized over the union of their bounds (or the given
    box). Two empty meshes count as identical.

    Raises:
        OpenMeshError: if either non-empty mesh has boundary edges.
    """
    for name, mesh in (("mesh_a", mesh_a), ("mesh_b", mesh_b)):
        if not mesh.is_empty and not mesh.is_closed():
            raise OpenMeshError(f"{name} is not closed")
    if mesh_a.is_empty and mesh_b.is_empty:
        return 1.0
    if bounds is None:
        boxes = [m.bounds() for m in (mesh_a, mesh_b) if not m.is_empty]
        bounds = boxes[0] if len(boxes) == 1 else boxes[0].union(boxes[1])
        pad = 0.01 * bounds.extent
        bounds = Aabb(tuple(bounds.lo_array - pad), tuple(bounds.hi_array + pad))

    a = voxelize(mesh_a, bounds, resolution)
    b = voxelize(mesh_b, bounds, resolution)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    iou = np.count_nonzero(a & b) / union
    logger.debug(f"IoU {iou:.4f} at {resolution}^3 ({union} voxels in the union)")
    return float(iou)


def image_psnr(a: Image, b: Image) -> float:
    """PSNR in dB on linear values with peak = max(b). Identical images give +inf."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image {a.shape} vs {b.shape}")
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return float("inf")
    peak = float(np.max(b.pixels))
    if peak <= 0.0:
        logger.warning("Reference peak is not positive; PSNR is undefined")
        return float("-inf")
    return float(10.0 * np.log10(peak * peak / mse))
