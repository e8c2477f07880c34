"""
Bounding-volume hierarchy over a triangle mesh.

Nodes live in flat numpy arrays. Traversal is wavefront style: a stack of
(node, ray ids) pairs, so each node is visited once per batch with every ray
that still overlaps it. Leaves run the Moller-Trumbore test for all of their
rays against all of their triangles at once.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .mesh import TriangleMesh
from .vec import Aabb, HitBatch, Intersection, Ray, RayBatch

logger = logging.getLogger(__name__)

LEAF_SIZE = 4
DET_EPSILON = 1e-14
# Node boxes are padded so flat (axis-aligned) triangles still have volume.
BOX_PAD = 1e-9
RAY_CHUNK = 4096


@dataclass(frozen=True)
class Accelerator:
    """Immutable BVH. Empty meshes yield a handle that never reports hits."""
    node_lo: np.ndarray
    node_hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    # Triangle data in leaf order.
    tri_index: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normals: np.ndarray
    material_ids: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_lo)

    @property
    def n_triangles(self) -> int:
        return len(self.tri_index)

    def intersect(self, rays: RayBatch) -> HitBatch:
        return intersect(self, rays)


def build_accelerator(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> Accelerator:
    """Median split on the longest centroid axis until leaves hold <= leaf_size faces."""
    n = mesh.n_faces
    if n == 0:
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, dtype=np.int64)
        return Accelerator(z3, z3, zi, zi, zi, zi, zi, z3, z3, z3, z3, zi)

    v0, v1, v2 = mesh.triangles()
    tri_lo = np.minimum(np.minimum(v0, v1), v2)
    tri_hi = np.maximum(np.maximum(v0, v1), v2)
    centroids = (v0 + v1 + v2) / 3.0

    order = np.arange(n)
    node_lo: List[np.ndarray] = []
    node_hi: List[np.ndarray] = []
    left: List[int] = []
    right: List[int] = []
    start: List[int] = []
    count: List[int] = []

    def new_node(s: int, e: int) -> int:
        ids = order[s:e]
        node_lo.append(tri_lo[ids].min(axis=0) - BOX_PAD)
        node_hi.append(tri_hi[ids].max(axis=0) + BOX_PAD)
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(node_lo) - 1

    stack = [(new_node(0, n), 0, n)]
    while stack:
        node, s, e = stack.pop()
        if e - s <= leaf_size:
            continue
        ids = order[s:e]
        c = centroids[ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order[s:e] = ids[np.argsort(c[:, axis], kind="stable")]
        mid = s + (e - s) // 2
        lchild = new_node(s, mid)
        rchild = new_node(mid, e)
        left[node] = lchild
        right[node] = rchild
        count[node] = 0
        stack.append((rchild, mid, e))
        stack.append((lchild, s, mid))

    normals = mesh.face_normals()
    logger.debug(f"BVH built: {n} triangles, {len(node_lo)} nodes")
    return Accelerator(
        node_lo=np.array(node_lo),
        node_hi=np.array(node_hi),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
        tri_index=order.copy(),
        v0=v0[order],
        e1=(v1 - v0)[order],
        e2=(v2 - v0)[order],
        normals=normals[order],
        material_ids=np.asarray(mesh.material_ids)[order],
    )


# =============================================================================
# Kernels
# =============================================================================

def _moller_trumbore(o, d, v0, e1, e2):
    """Broadcast rays (R, 3) against triangles (T, 3). Returns t (R, T), NaN-free, inf on miss."""
    pvec = np.cross(d[:, None, :], e2[None, :, :])
    det = np.einsum("tj,rtj->rt", e1, pvec)
    valid = np.abs(det) > DET_EPSILON
    inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    tvec = o[:, None, :] - v0[None, :, :]
    u = np.einsum("rtj,rtj->rt", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("rj,rtj->rt", d, qvec) * inv_det
    t = np.einsum("tj,rtj->rt", e2, qvec) * inv_det
    ok = valid & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    return np.where(ok, t, np.inf)


def _slab(o, inv_d, lo, hi):
    with np.errstate(over="ignore", invalid="ignore"):
        t1 = (lo - o) * inv_d
        t2 = (hi - o) * inv_d
    t_near = np.fmax.reduce(np.fmin(t1, t2), axis=1)
    t_far = np.fmin.reduce(np.fmax(t1, t2), axis=1)
    return t_near, t_far


def _safe_inverse(d: np.ndarray) -> np.ndarray:
    tiny = np.where(d >= 0.0, 1e-300, -1e-300)
    return 1.0 / np.where(np.abs(d) < 1e-300, tiny, d)


def _accept(best_t, best_tri, cand_t, cand_tri):
    """Nearest hit wins; exact ties go to the lower triangle index (traversal-order independent)."""
    return (cand_t < best_t) | ((cand_t == best_t) & (cand_tri < best_tri))


# =============================================================================
# Queries
# =============================================================================

def intersect(accel: Accelerator, rays: RayBatch) -> HitBatch:
    """Nearest hit in (t_min, t_max] for every ray of the batch."""
    n = len(rays)
    out = HitBatch.misses(n)
    if n == 0 or accel.n_triangles == 0:
        return out

    o = rays.origins
    d = rays.directions
    inv_d = _safe_inverse(d)
    t_min = rays.t_min
    best_t = rays.t_max.astype(np.float64).copy()
    # Position in leaf order; mesh face id is tri_index[best_slot].
    best_slot = np.full(n, -1, dtype=np.int64)
    best_tri = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)

    stack = [(0, np.arange(n))]
    while stack:
        node, ids = stack.pop()
        t_near, t_far = _slab(o[ids], inv_d[ids], accel.node_lo[node], accel.node_hi[node])
        keep = (t_far >= np.maximum(t_near, t_min[ids])) & (t_near <= best_t[ids])
        ids = ids[keep]
        if ids.size == 0:
            continue

        if accel.left[node] >= 0:
            stack.append((accel.right[node], ids))
            stack.append((accel.left[node], ids))
            continue

        s, c = accel.start[node], accel.count[node]
        t = _moller_trumbore(o[ids], d[ids], accel.v0[s:s + c], accel.e1[s:s + c], accel.e2[s:s + c])
        t = np.where((t > t_min[ids, None]) & (t <= best_t[ids, None]), t, np.inf)
        tri = accel.tri_index[s:s + c]
        # Lowest t, ties by lowest face id.
        key = np.lexsort((np.broadcast_to(tri, t.shape), t), axis=1)[:, 0]
        rows = np.arange(len(ids))
        cand_t = t[rows, key]
        cand_tri = tri[key]
        win = np.isfinite(cand_t) & _accept(best_t[ids], best_tri[ids], cand_t, cand_tri)
        win_ids = ids[win]
        best_t[win_ids] = cand_t[win]
        best_tri[win_ids] = cand_tri[win]
        best_slot[win_ids] = s + key[win]

    hit = best_slot >= 0
    slot = best_slot[hit]
    out.t[hit] = best_t[hit]
    out.face_id[hit] = accel.tri_index[slot]
    out.mesh_id[hit] = accel.material_ids[slot]
    out.position[hit] = o[hit] + best_t[hit, None] * d[hit]
    out.normal[hit] = accel.normals[slot]
    return out


def ray_intersect(accel: Accelerator, ray: Ray) -> Optional[Intersection]:
    """Nearest hit of a single ray, or None."""
    return intersect(accel, ray.to_batch()).record(0)


def intersect_brute_force(mesh: TriangleMesh, rays: RayBatch) -> HitBatch:
    """Reference query testing every face; used to validate the BVH."""
    n = len(rays)
    out = HitBatch.misses(n)
    if n == 0 or mesh.is_empty:
        return out
    v0, v1, v2 = mesh.triangles()
    e1, e2 = v1 - v0, v2 - v0
    normals = mesh.face_normals()
    for s in range(0, n, RAY_CHUNK):
        sl = slice(s, min(n, s + RAY_CHUNK))
        t = _moller_trumbore(rays.origins[sl], rays.directions[sl], v0, e1, e2)
        t = np.where((t > rays.t_min[sl, None]) & (t <= rays.t_max[sl, None]), t, np.inf)
        face = np.argmin(t, axis=1)
        tbest = t[np.arange(len(face)), face]
        hit = np.isfinite(tbest)
        idx = np.arange(sl.start, sl.stop)[hit]
        out.t[idx] = tbest[hit]
        out.face_id[idx] = face[hit]
        out.mesh_id[idx] = mesh.material_ids[face[hit]]
        out.position[idx] = rays.origins[idx] + tbest[hit, None] * rays.directions[idx]
        out.normal[idx] = normals[face[hit]]
    return out


def aabb_exit_distances(origins: np.ndarray, directions: np.ndarray, box: Aabb) -> np.ndarray:
    """
    Parametric exit distance of each ray from the box.

    Rays that never enter the box (missing it, pointing away, or parallel to a
    slab they lie outside of) get 0.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    lo, hi = box.lo_array, box.hi_array

    parallel = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    inside_slab = (o >= lo) & (o <= hi)
    t_lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    t_hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    t_near = t_lo.max(axis=1)
    t_far = t_hi.min(axis=1)
    enters = (t_far >= np.maximum(t_near, 0.0)) & np.isfinite(t_far)
    return np.where(enters, np.maximum(t_far, 0.0), 0.0)


def aabb_exit_distance(ray: Ray, box: Aabb) -> float:
    """Single-ray form of aabb_exit_distances."""
    return float(aabb_exit_distances(ray.origin, ray.direction, box)[0])


def hit_rate(accel: Accelerator, rays: RayBatch) -> float:
    if len(rays) == 0:
        return 0.0
    return float(intersect(accel, rays).hit.mean())


def scene_diagonal(*boxes: Optional[Aabb]) -> float:
    real = [b for b in boxes if b is not None]
    if not real:
        return 1.0
    box = real[0]
    for b in real[1:]:
        box = box.union(b)
    diag = box.diagonal
    return diag if diag > 0.0 and math.isfinite(diag) else 1.0
