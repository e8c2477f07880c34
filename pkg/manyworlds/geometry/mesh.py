"""
Triangle meshes and primitive builders.

A TriangleMesh is immutable once created: its arrays are flagged read-only so
that accelerators and worker threads can share it without copies.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .vec import Aabb, normalize

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (V, 3), faces (F, 3) and a material id per face."""
    vertices: np.ndarray
    faces: np.ndarray
    material_ids: np.ndarray

    @classmethod
    def create(
        cls,
        vertices,
        faces,
        material_ids=None,
        *,
        drop_degenerate: bool = True,
        name: str = "mesh",
    ) -> "TriangleMesh":
        """
        Validate and build a mesh.

        Raises:
            ValueError: on bad shapes or out-of-range face indices.
        """
        v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if material_ids is None:
            m = np.zeros(len(f), dtype=np.int64)
        else:
            m = np.broadcast_to(np.asarray(material_ids, dtype=np.int64), (len(f),)).copy()

        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name}: vertex coordinates must be finite")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError(f"{name}: face index out of range for {len(v)} vertices")

        if drop_degenerate and len(f):
            areas = _face_areas(v, f)
            keep = areas > DEGENERATE_AREA
            dropped = int((~keep).sum())
            if dropped:
                logger.warning(f"{name}: dropped {dropped} degenerate triangle(s) of {len(f)}")
                f = f[keep]
                m = m[keep]

        return cls(vertices=_frozen(v), faces=_frozen(f), material_ids=_frozen(m))

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls.create(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return self.n_faces == 0

    def triangles(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Corner arrays (v0, v1, v2), each (F, 3)."""
        return (
            self.vertices[self.faces[:, 0]],
            self.vertices[self.faces[:, 1]],
            self.vertices[self.faces[:, 2]],
        )

    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    def face_normals(self) -> np.ndarray:
        """Unit geometric normals following the winding (v1 - v0) x (v2 - v0)."""
        v0, v1, v2 = self.triangles()
        return normalize(np.cross(v1 - v0, v2 - v0))

    def bounds(self) -> Optional[Aabb]:
        if self.n_vertices == 0:
            return None
        used = self.vertices[np.unique(self.faces)] if self.n_faces else self.vertices
        return Aabb(tuple(used.min(axis=0)), tuple(used.max(axis=0)))

    def signed_volume(self) -> float:
        """Divergence-theorem volume; positive for outward-wound closed meshes."""
        if self.is_empty:
            return 0.0
        v0, v1, v2 = self.triangles()
        return float(np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum() / 6.0)

    def edge_counts(self) -> Dict[Tuple[int, int], int]:
        edges = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        keys, counts = np.unique(edges, axis=0, return_counts=True)
        return {(int(a), int(b)): int(c) for (a, b), c in zip(keys, counts)}

    def is_closed(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        if self.is_empty:
            return True
        edges = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def with_material(self, material_id: int) -> "TriangleMesh":
        return TriangleMesh.create(self.vertices, self.faces, material_id, drop_degenerate=False)

    def transformed(self, scale: float = 1.0, translate=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        v = self.vertices * scale + np.asarray(translate, dtype=np.float64)
        return TriangleMesh.create(v, self.faces, self.material_ids, drop_degenerate=False)


def _face_areas(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    if len(f) == 0:
        return np.zeros(0)
    c = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return 0.5 * np.linalg.norm(c, axis=1)


# =============================================================================
# Primitive builders
# =============================================================================

_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def icosphere(
    radius: float = 1.0,
    subdivisions: int = 2,
    center: Sequence[float] = (0.0, 0.0, 0.0),
    material_id: int = 0,
) -> TriangleMesh:
    """Subdivided icosahedron with 20 * 4**subdivisions outward-wound faces."""
    p = (1.0 + 5.0 ** 0.5) / 2.0
    verts: List[np.ndarray] = [
        np.array(v, dtype=np.float64) for v in [
            (-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
            (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
            (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1),
        ]
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    faces = list(_ICO_FACES)

    for _ in range(subdivisions):
        cache: Dict[Tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined

    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh.create(v, np.array(faces), material_id, drop_degenerate=False, name="icosphere")


def quad_mesh(corner, edge_u, edge_v, material_id: int = 0) -> TriangleMesh:
    """Parallelogram corner + a*edge_u + b*edge_v facing along edge_u x edge_v."""
    c = np.asarray(corner, dtype=np.float64)
    u = np.asarray(edge_u, dtype=np.float64)
    w = np.asarray(edge_v, dtype=np.float64)
    v = np.array([c, c + u, c + u + w, c + w])
    return TriangleMesh.create(v, [(0, 1, 2), (0, 2, 3)], material_id, name="quad")


def box_mesh(lo, hi, material_id: int = 0) -> TriangleMesh:
    """Closed axis-aligned box with outward normals."""
    x0, y0, z0 = (float(a) for a in lo)
    x1, y1, z1 = (float(a) for a in hi)
    v = np.array([
        (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
    ])
    f = [
        (0, 2, 1), (0, 3, 2),  # -z
        (4, 5, 6), (4, 6, 7),  # +z
        (0, 1, 5), (0, 5, 4),  # -y
        (3, 7, 6), (3, 6, 2),  # +y
        (0, 4, 7), (0, 7, 3),  # -x
        (1, 2, 6), (1, 6, 5),  # +x
    ]
    return TriangleMesh.create(v, f, material_id, name="box")


def merge_meshes(meshes: Sequence[TriangleMesh], material_ids: Optional[Sequence[int]] = None) -> TriangleMesh:
    """Concatenate meshes; material_ids, if given, overrides each mesh's ids."""
    if not meshes:
        return TriangleMesh.empty()
    verts, faces, mats = [], [], []
    offset = 0
    for i, mesh in enumerate(meshes):
        verts.append(mesh.vertices)
        faces.append(mesh.faces + offset)
        if material_ids is None:
            mats.append(mesh.material_ids)
        else:
            mats.append(np.full(mesh.n_faces, material_ids[i], dtype=np.int64))
        offset += mesh.n_vertices
    return TriangleMesh.create(
        np.concatenate(verts), np.concatenate(faces), np.concatenate(mats), drop_degenerate=False
    )
