"""Light sources: a constant environment and one-sided emissive rectangles."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from ..geometry.mesh import TriangleMesh, quad_mesh

RGB = Tuple[float, float, float]


def _radiance(rgb) -> Tuple[float, float, float]:
    arr = np.asarray(rgb, dtype=np.float64).reshape(3)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"radiance must be finite and non-negative, got {rgb}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class EnvironmentEmitter:
    radiance: RGB

    def __post_init__(self):
        object.__setattr__(self, "radiance", _radiance(self.radiance))


@dataclass(frozen=True)
class RectangleEmitter:
    """Emits along edge_u x edge_v; the back side is black."""
    corner: Tuple[float, float, float]
    edge_u: Tuple[float, float, float]
    edge_v: Tuple[float, float, float]
    radiance: RGB

    def __post_init__(self):
        object.__setattr__(self, "radiance", _radiance(self.radiance))
        if np.linalg.norm(np.cross(self.edge_u, self.edge_v)) <= 0.0:
            raise ValueError("rectangle edges must span an area")

    def mesh(self, material_id: int = 0) -> TriangleMesh:
        return quad_mesh(self.corner, self.edge_u, self.edge_v, material_id)


Emitter = Union[EnvironmentEmitter, RectangleEmitter]


def eval_env(emitters: Sequence[Emitter], directions) -> np.ndarray:
    """Radiance of escaping rays, (N, 3); zero when there is no environment."""
    d = np.asarray(directions, dtype=np.float64)
    n = 1 if d.ndim == 1 else len(d)
    out = np.zeros((n, 3))
    for e in emitters:
        if isinstance(e, EnvironmentEmitter):
            out += np.asarray(e.radiance)
    return out[0] if d.ndim == 1 else out
