"""Gradient accumulators for the occupancy parameters and the albedo grid."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import DimensionMismatchError, NonFiniteError
from ..geometry.vec import Aabb
from .checkpoint import save_grid

logger = logging.getLogger(__name__)


def require_finite(g: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(g)):
        bad = int((~np.isfinite(g)).sum())
        raise NonFiniteError(f"{what}: {bad} non-finite gradient value(s) rejected")


@dataclass
class GradientBuffer:
    """
    d_mu matches the field parameter layout; d_albedo matches the albedo grid
    (nx, ny, nz, 3) or is None when the scene has no albedo grid.
    """
    d_mu: np.ndarray
    d_albedo: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, mu_shape, albedo_shape=None) -> "GradientBuffer":
        return cls(
            d_mu=np.zeros(mu_shape),
            d_albedo=None if albedo_shape is None else np.zeros(albedo_shape),
        )

    @classmethod
    def for_scene(cls, scene) -> "GradientBuffer":
        albedo = scene.albedo_grid
        return cls.zeros(
            scene.field.parameters.shape,
            None if albedo is None else albedo.values.shape,
        )

    def like(self) -> "GradientBuffer":
        return GradientBuffer.zeros(
            self.d_mu.shape, None if self.d_albedo is None else self.d_albedo.shape
        )

    def add(self, other: "GradientBuffer") -> None:
        """In-place sum; layouts must match."""
        if other.d_mu.shape != self.d_mu.shape:
            raise DimensionMismatchError(f"d_mu layout {other.d_mu.shape} != {self.d_mu.shape}")
        self.d_mu += other.d_mu
        if other.d_albedo is not None:
            if self.d_albedo is None or other.d_albedo.shape != self.d_albedo.shape:
                raise DimensionMismatchError("d_albedo layouts differ")
            self.d_albedo += other.d_albedo

    def norm(self) -> float:
        total = float(np.sum(self.d_mu ** 2))
        if self.d_albedo is not None:
            total += float(np.sum(self.d_albedo ** 2))
        return total ** 0.5

    def clip_norm(self, max_norm: float) -> float:
        """Rescale to a global norm of at most max_norm. Returns the norm before clipping."""
        n = self.norm()
        if n > max_norm > 0.0:
            scale = max_norm / n
            self.d_mu *= scale
            if self.d_albedo is not None:
                self.d_albedo *= scale
            logger.debug(f"Gradient clipped from {n:.4g} to {max_norm:.4g}")
        return n

    def is_zero(self) -> bool:
        return not np.any(self.d_mu) and (self.d_albedo is None or not np.any(self.d_albedo))

    def save(self, path: Union[str, Path], bounds: Aabb) -> None:
        """Dump d_mu (and d_albedo beside it as <stem>_albedo.mwgrid) in checkpoint format."""
        path = Path(path)
        save_grid(path, self.d_mu, bounds)
        if self.d_albedo is not None:
            save_grid(path.with_name(path.stem + "_albedo" + path.suffix), self.d_albedo, bounds)
