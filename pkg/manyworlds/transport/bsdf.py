"""
Surface scattering models.

Both variants are one-sided: directions below the hemisphere of the shading
normal get zero weight. Sampling returns the importance weight f*cos/pdf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..fields.albedo import AlbedoGrid, albedo_at
from ..geometry.vec import as_points, dot, reflect, to_world


@dataclass(frozen=True)
class DiffuseBsdf:
    """Lambertian; albedo is a constant RGB or an AlbedoGrid lookup."""
    albedo: Union[Tuple[float, float, float], AlbedoGrid] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if not isinstance(self.albedo, AlbedoGrid):
            rgb = tuple(float(x) for x in np.asarray(self.albedo, dtype=np.float64).reshape(3))
            if any(not 0.0 <= c <= 1.0 for c in rgb):
                raise ValueError(f"albedo must lie in [0, 1]^3, got {rgb}")
            object.__setattr__(self, "albedo", rgb)

    @property
    def albedo_grid(self) -> Optional[AlbedoGrid]:
        return self.albedo if isinstance(self.albedo, AlbedoGrid) else None

    def reflectance(self, x: np.ndarray) -> np.ndarray:
        if isinstance(self.albedo, AlbedoGrid):
            return albedo_at(self.albedo, as_points(x))
        return np.broadcast_to(np.asarray(self.albedo), (len(x), 3)).copy()

    def sample(self, n: np.ndarray, wo: np.ndarray, x: np.ndarray, u: np.ndarray):
        """Cosine-weighted hemisphere about n. Returns (wi, weight)."""
        r = np.sqrt(u[:, 0])
        phi = 2.0 * math.pi * u[:, 1]
        local = np.stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(0.0, 1.0 - u[:, 0]))], axis=1)
        wi = to_world(local, n)
        weight = self.reflectance(x)
        weight[dot(n, wo) <= 0.0] = 0.0
        return wi, weight


@dataclass(frozen=True)
class MirrorBsdf:
    """Perfect specular reflection with unit weight."""

    @property
    def albedo_grid(self) -> Optional[AlbedoGrid]:
        return None

    def sample(self, n: np.ndarray, wo: np.ndarray, x: np.ndarray, u: np.ndarray):
        wi = reflect(wo, n)
        weight = np.ones((len(n), 3))
        weight[dot(n, wo) <= 0.0] = 0.0
        return wi, weight


Bsdf = Union[DiffuseBsdf, MirrorBsdf]

BLACK = DiffuseBsdf((0.0, 0.0, 0.0))


def sample_bsdf(bsdf: Bsdf, n, wo, x, rng: np.random.Generator):
    """
    Sample an incident direction.

    Single vectors give (wi (3,), weight (3,)); (N, 3) batches give arrays.
    """
    single = np.asarray(n).ndim == 1
    n, wo, x = as_points(n), as_points(wo), as_points(x)
    wi, weight = bsdf.sample(n, wo, x, rng.random((len(n), 2)))
    if single:
        return wi[0], weight[0]
    return wi, weight
