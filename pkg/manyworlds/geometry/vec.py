"""
Vector helpers and ray/box/hit records.

Everything here works on numpy arrays shaped (..., 3). Single rays and single
hits are thin dataclasses; the renderer itself traces RayBatch objects so that
all lanes of a tile move through the scene together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


def as_points(x) -> np.ndarray:
    """Coerce a point or a list of points into an (N, 3) float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected points shaped (N, 3), got {arr.shape}")
    return arr


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


def norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(v, v))


def normalize(v: np.ndarray) -> np.ndarray:
    """Normalize along the last axis. Zero vectors stay zero."""
    v = np.asarray(v, dtype=np.float64)
    n = norm(v)
    safe = np.where(n > 0.0, n, 1.0)
    return v / safe[..., None]


def reflect(wo: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror wo (pointing away from the surface) about n."""
    return 2.0 * dot(wo, n)[..., None] * n - wo


def coordinate_frame(n: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangents (t, b) for unit normals n, branchless form."""
    n = np.atleast_2d(n)
    sign = np.where(n[:, 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t = np.stack([1.0 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]], axis=1)
    bt = np.stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]], axis=1)
    return t, bt


def to_world(local: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Rotate local directions (z = normal) into the frame of n."""
    t, b = coordinate_frame(n)
    return local[:, 0:1] * t + local[:, 1:2] * b + local[:, 2:3] * n


# =============================================================================
# Records
# =============================================================================

@dataclass
class Ray:
    """A single ray. The direction is normalized on construction."""
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        length = float(np.linalg.norm(d))
        if not np.isfinite(length) or length == 0.0:
            raise ValueError("ray direction must be a finite non-zero vector")
        self.direction = d / length
        if self.t_min < 0.0:
            raise ValueError(f"t_min must be non-negative, got {self.t_min}")
        if not self.t_min < self.t_max:
            raise ValueError(f"t_min ({self.t_min}) must be < t_max ({self.t_max})")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction

    def to_batch(self) -> "RayBatch":
        return RayBatch(
            origins=self.origin[None, :].copy(),
            directions=self.direction[None, :].copy(),
            t_min=np.array([self.t_min]),
            t_max=np.array([self.t_max]),
        )


@dataclass
class RayBatch:
    """N rays stored as parallel arrays."""
    origins: np.ndarray
    directions: np.ndarray
    t_min: np.ndarray
    t_max: np.ndarray

    @classmethod
    def create(cls, origins, directions, t_min=0.0, t_max=math.inf) -> "RayBatch":
        o = as_points(origins)
        d = normalize(as_points(directions))
        n = len(o)
        if len(d) != n:
            raise ValueError("origins and directions must have the same length")
        return cls(
            origins=o,
            directions=d,
            t_min=np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)).copy(),
            t_max=np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy(),
        )

    def __len__(self) -> int:
        return len(self.origins)

    def subset(self, mask) -> "RayBatch":
        return RayBatch(self.origins[mask], self.directions[mask], self.t_min[mask], self.t_max[mask])


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box."""
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3-vectors")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.extent <= 0.0))

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = as_points(points)
        return np.all((p >= self.lo_array) & (p <= self.hi_array), axis=1)

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(
            tuple(np.minimum(self.lo_array, other.lo_array)),
            tuple(np.maximum(self.hi_array, other.hi_array)),
        )


@dataclass
class Intersection:
    """Nearest hit of a single ray."""
    t: float
    position: np.ndarray
    geometric_normal: np.ndarray
    mesh_id: int
    face_id: int


@dataclass
class HitBatch:
    """Per-lane hit arrays. Misses carry t = inf and face_id = -1."""
    t: np.ndarray
    face_id: np.ndarray
    mesh_id: np.ndarray
    position: np.ndarray
    normal: np.ndarray

    @classmethod
    def misses(cls, n: int) -> "HitBatch":
        return cls(
            t=np.full(n, np.inf),
            face_id=np.full(n, -1, dtype=np.int64),
            mesh_id=np.full(n, -1, dtype=np.int64),
            position=np.zeros((n, 3)),
            normal=np.zeros((n, 3)),
        )

    @property
    def hit(self) -> np.ndarray:
        return self.face_id >= 0

    def __len__(self) -> int:
        return len(self.t)

    def record(self, i: int = 0) -> Optional[Intersection]:
        if self.face_id[i] < 0:
            return None
        return Intersection(
            t=float(self.t[i]),
            position=self.position[i].copy(),
            geometric_normal=self.normal[i].copy(),
            mesh_id=int(self.mesh_id[i]),
            face_id=int(self.face_id[i]),
        )
