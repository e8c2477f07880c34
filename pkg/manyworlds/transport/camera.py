"""Pinhole cameras."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..geometry.vec import Ray, RayBatch, normalize


@dataclass(frozen=True)
class Camera:
    """
    Pinhole camera with a vertical field of view in degrees.

    Film coordinates run u in [0, width] left to right and v in [0, height]
    top to bottom; pixel (px, py) covers [px, px+1] x [py, py+1].
    """
    position: Tuple[float, float, float]
    target: Tuple[float, float, float]
    up: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov: float = 40.0
    width: int = 64
    height: int = 64
    forward: np.ndarray = field(init=False, repr=False, compare=False)
    right: np.ndarray = field(init=False, repr=False, compare=False)
    true_up: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"fov must be in (0, 180), got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"resolution must be positive, got {self.width}x{self.height}")
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if np.allclose(pos, tgt):
            raise ValueError("camera target must differ from position")
        fwd = normalize(tgt - pos)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        right = normalize(right)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "true_up", np.cross(right, fwd))

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.width, self.height

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def directions(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Unit directions through film coordinates (u, v)."""
        tan_half = math.tan(math.radians(self.fov) / 2.0)
        aspect = self.width / self.height
        x = (2.0 * np.asarray(u, dtype=np.float64) / self.width - 1.0) * tan_half * aspect
        y = (1.0 - 2.0 * np.asarray(v, dtype=np.float64) / self.height) * tan_half
        d = self.forward[None, :] + x[:, None] * self.right[None, :] + y[:, None] * self.true_up[None, :]
        return normalize(d)


def ray_through(camera: Camera, u, v) -> RayBatch:
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    d = camera.directions(u, v)
    o = np.broadcast_to(np.asarray(camera.position, dtype=np.float64), d.shape)
    return RayBatch.create(o, d)


def generate_rays(camera: Camera, px: np.ndarray, py: np.ndarray, jitter: Optional[np.ndarray] = None) -> RayBatch:
    """Rays through pixels; jitter (N, 2) in [0, 1) or None for pixel centers."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    if jitter is None:
        jx = jy = 0.5
    else:
        jx, jy = jitter[:, 0], jitter[:, 1]
    return ray_through(camera, px + jx, py + jy)


def generate_ray(camera: Camera, pixel: Tuple[int, int], rng: Optional[np.random.Generator] = None) -> Ray:
    """
    Single pinhole ray through a pixel.

    With rng=None the ray passes through the pixel center (no-jitter mode);
    otherwise through a uniformly jittered position inside the pixel.
    """
    px, py = pixel
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel {pixel} outside {camera.width}x{camera.height} film")
    jitter = None if rng is None else rng.random((1, 2))
    batch = generate_rays(camera, np.array([px]), np.array([py]), jitter)
    return Ray(batch.origins[0], batch.directions[0])
