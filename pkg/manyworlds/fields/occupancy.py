"""
Occupancy fields.

The mean implicit function mu is a tricubic B-spline over a ScalarGrid; with
a constant standard deviation sigma the probability of a point being inside
the random surface is

    alpha = 1/2 * erfc(mu / (sqrt(2) * sigma))

and the orientation is the normalized mean gradient beta = grad mu / |grad mu|.

Renderer and adjoint only see the OccupancyModel protocol, so analytic
fields (used by the tests) plug in beside the grid-backed OccupancyField.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Protocol, runtime_checkable

import numpy as np
from scipy.special import erfc

from ..config import FieldConfig
from ..geometry.mesh import TriangleMesh
from ..geometry.vec import Aabb, as_points, dot
from .bspline import cubic_stencil, interpolate, interpolate_gradient, scatter
from .gradients import GradientBuffer, require_finite
from .grid import ScalarGrid

logger = logging.getLogger(__name__)

DEGENERATE_GRADIENT = 1e-9
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def alpha_from_mu(mu, sigma: float) -> np.ndarray:
    return 0.5 * erfc(np.asarray(mu, dtype=np.float64) / (_SQRT2 * sigma))


def dalpha_dmu(mu, sigma: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    return -np.exp(-0.5 * (mu / sigma) ** 2) / (sigma * _SQRT2PI)


@runtime_checkable
class OccupancyModel(Protocol):
    """What transport and adjoint need from a many-worlds representation."""

    sigma: float
    version: int
    orientation_sign: float

    @property
    def bounds(self) -> Aabb: ...

    @property
    def parameters(self) -> np.ndarray: ...

    def alpha(self, points: np.ndarray) -> np.ndarray: ...

    def beta(self, points: np.ndarray) -> np.ndarray: ...

    def interacts(self, points: np.ndarray, directions: np.ndarray) -> np.ndarray: ...

    def alpha_plus(self, points: np.ndarray, directions: np.ndarray) -> np.ndarray: ...

    def scatter_alpha(self, target: np.ndarray, points: np.ndarray, g: np.ndarray) -> None: ...

    def scatter_beta(self, target: np.ndarray, points: np.ndarray, g: np.ndarray) -> None: ...

    def mean_surface(self) -> TriangleMesh: ...

    def mark_updated(self) -> None: ...


class OccupancyField:
    """Grid-backed occupancy with constant sigma."""

    def __init__(self, mu: ScalarGrid, sigma: float, facing: str = "opposes_ray"):
        if not sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if facing not in ("opposes_ray", "along_ray"):
            raise ValueError(f"unknown facing convention {facing!r}")
        self.mu = mu
        self.sigma = float(sigma)
        self.facing = facing
        # Bumped whenever mu changes; the scene compares it to its mean surface.
        self.version = 0

    @classmethod
    def from_config(cls, cfg: FieldConfig, mu: Optional[ScalarGrid] = None) -> "OccupancyField":
        bounds = Aabb(*cfg.bounds)
        h = float(np.min(bounds.extent / np.asarray(cfg.resolution)))
        sigma = cfg.sigma if cfg.sigma is not None else cfg.sigma_voxels * h
        if mu is None:
            mu = ScalarGrid.constant(cfg.resolution, bounds, cfg.init_mu_sigmas * sigma)
        return cls(mu, sigma, cfg.facing)

    @property
    def bounds(self) -> Aabb:
        return self.mu.bounds

    @property
    def parameters(self) -> np.ndarray:
        return self.mu.values

    @property
    def orientation_sign(self) -> float:
        """+1 if a many-worlds surface shades with beta, -1 if with -beta."""
        return 1.0 if self.facing == "opposes_ray" else -1.0

    def mark_updated(self) -> None:
        self.version += 1

    # -------------------------------------------------------------------------
    # Lookups
    # -------------------------------------------------------------------------

    def mu_at(self, points) -> np.ndarray:
        st = cubic_stencil(points, self.mu.resolution, self.bounds)
        return interpolate(self.mu.values, st)

    def grad_mu(self, points) -> np.ndarray:
        st = cubic_stencil(points, self.mu.resolution, self.bounds)
        return interpolate_gradient(self.mu.values, st)

    def alpha(self, points) -> np.ndarray:
        return alpha_from_mu(self.mu_at(points), self.sigma)

    def beta(self, points) -> np.ndarray:
        """Unit orientation; the zero vector marks a degenerate gradient."""
        g = self.grad_mu(points)
        n = np.linalg.norm(g, axis=1)
        ok = n >= DEGENERATE_GRADIENT
        out = np.zeros_like(g)
        out[ok] = g[ok] / n[ok, None]
        return out

    def interacts(self, points, directions) -> np.ndarray:
        """In bounds, non-degenerate, and facing the ray per the configured convention."""
        p = as_points(points)
        d = as_points(directions)
        b = self.beta(p)
        cos = dot(b, d)
        facing = cos < 0.0 if self.facing == "opposes_ray" else cos > 0.0
        return self.bounds.contains(p) & np.any(b != 0.0, axis=1) & facing

    def alpha_plus(self, points, directions) -> np.ndarray:
        p = as_points(points)
        return np.where(self.interacts(p, directions), self.alpha(p), 0.0)

    # -------------------------------------------------------------------------
    # Adjoint scatter (transposes of the lookups above)
    # -------------------------------------------------------------------------

    def scatter_alpha(self, target: np.ndarray, points, g) -> None:
        """target += g * dalpha/dmu(x) * w_i over the stencil of each point."""
        p = as_points(points)
        g = np.broadcast_to(np.asarray(g, dtype=np.float64), (len(p),))
        require_finite(g, "alpha gradient")
        st = cubic_stencil(p, self.mu.resolution, self.bounds)
        mu = interpolate(self.mu.values, st)
        scale = g * dalpha_dmu(mu, self.sigma)
        scatter(target, st, scale[:, None] * st.weights())

    def scatter_beta(self, target: np.ndarray, points, g) -> None:
        """Chain rule through beta = G/|G| and the interpolant gradient G."""
        p = as_points(points)
        g = as_points(np.broadcast_to(np.asarray(g, dtype=np.float64), (len(p), 3)))
        require_finite(g, "beta gradient")
        st = cubic_stencil(p, self.mu.resolution, self.bounds)
        G = interpolate_gradient(self.mu.values, st)
        n = np.linalg.norm(G, axis=1)
        ok = n >= DEGENERATE_GRADIENT
        if not np.any(ok):
            return
        beta = np.zeros_like(G)
        beta[ok] = G[ok] / n[ok, None]
        # (I - beta beta^T) g / |G|
        dG = np.zeros_like(G)
        dG[ok] = (g[ok] - dot(beta[ok], g[ok])[:, None] * beta[ok]) / n[ok, None]
        node = np.einsum("nkc,nc->nk", st.gradient_weights(), dG)
        scatter(target, st, node)

    def mean_surface(self, iso: float = 0.0) -> TriangleMesh:
        from ..extraction import marching_cubes

        return marching_cubes(self.mu, iso)

    def copy(self) -> "OccupancyField":
        clone = OccupancyField(self.mu.copy(), self.sigma, self.facing)
        clone.version = self.version
        return clone


# =============================================================================
# Functional interface
# =============================================================================

def _single(points, values):
    return values[0] if np.asarray(points).ndim == 1 else values


def mu_at(field: OccupancyField, x):
    """Tricubic mean implicit value; scalar for a single point."""
    return _single(x, field.mu_at(x))


def alpha_at(field: OccupancyField, x):
    return _single(x, field.alpha(x))


def beta_at(field: OccupancyField, x):
    return _single(x, field.beta(x))


def alpha_plus(field: OccupancyModel, x, d):
    return _single(x, field.alpha_plus(x, d))


def scatter_alpha_gradient(buf: GradientBuffer, field: OccupancyModel, x, g) -> None:
    """Accumulate an occupancy adjoint at x into buf.d_mu. Non-finite g raises NonFiniteError."""
    field.scatter_alpha(buf.d_mu, x, g)


def scatter_beta_gradient(buf: GradientBuffer, field: OccupancyModel, x, g) -> None:
    """Accumulate an orientation adjoint at x; degenerate points are skipped."""
    field.scatter_beta(buf.d_mu, x, g)
