"""
Analytic test scenes.

Small scenes with known answers, shared by unit and integration tests.
"""
from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from manyworlds.config import FieldConfig
from manyworlds.fields.albedo import AlbedoGrid
from manyworlds.fields.grid import ScalarGrid
from manyworlds.fields.occupancy import OccupancyField
from manyworlds.geometry.mesh import TriangleMesh, box_mesh, icosphere, merge_meshes, quad_mesh
from manyworlds.geometry.vec import Aabb, as_points, dot
from manyworlds.optimize.references import make_references
from manyworlds.transport.bsdf import BLACK, DiffuseBsdf, MirrorBsdf
from manyworlds.transport.camera import Camera
from manyworlds.transport.emitters import EnvironmentEmitter
from manyworlds.transport.scene import Material, Scene

UNIT_BOX = Aabb((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


# =============================================================================
# Slab: alpha = theta inside z in [z0, z1], beta = -z
# =============================================================================

class SlabField:
    """
    One-parameter occupancy model.

    A camera at the origin looking along +z through the unit box sees the
    environment attenuated to 1 - (z1 - z0) * theta on average.
    """

    sigma = 1.0
    orientation_sign = 1.0

    def __init__(self, theta: float = 0.5, z0: float = 0.375, z1: float = 0.625, bounds: Aabb = UNIT_BOX):
        self.theta = np.array([float(theta)])
        self.z0 = z0
        self.z1 = z1
        self._bounds = bounds
        self.version = 0

    @property
    def bounds(self) -> Aabb:
        return self._bounds

    @property
    def parameters(self) -> np.ndarray:
        return self.theta

    def inside(self, points) -> np.ndarray:
        p = as_points(points)
        return (p[:, 2] >= self.z0) & (p[:, 2] <= self.z1)

    def alpha(self, points) -> np.ndarray:
        return np.where(self.inside(points), self.theta[0], 0.0)

    def beta(self, points) -> np.ndarray:
        return np.tile([0.0, 0.0, -1.0], (len(as_points(points)), 1))

    def interacts(self, points, directions) -> np.ndarray:
        p = as_points(points)
        return self.bounds.contains(p) & (dot(self.beta(p), as_points(directions)) < 0.0)

    def alpha_plus(self, points, directions) -> np.ndarray:
        return np.where(self.interacts(points, directions), self.alpha(points), 0.0)

    def scatter_alpha(self, target, points, g) -> None:
        g = np.broadcast_to(np.asarray(g, dtype=np.float64), (len(as_points(points)),))
        target[0] += float(np.sum(g[self.inside(points)]))

    def scatter_beta(self, target, points, g) -> None:
        pass

    def mean_surface(self) -> TriangleMesh:
        return TriangleMesh.empty()

    def mark_updated(self) -> None:
        self.version += 1


def slab_camera(size: int = 4, fov: float = 4.0) -> Camera:
    return Camera((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0), fov, size, size)


def slab_scene(theta: float = 0.5, size: int = 4, env: float = 1.0) -> Scene:
    scene = Scene.assemble(
        [], SlabField(theta), BLACK, [EnvironmentEmitter((env, env, env))], [slab_camera(size)]
    )
    scene.extract_mean_surface()
    return scene


def albedo_slab_scene(theta: float = 0.5, rho: float = 0.5, size: int = 4) -> Scene:
    """Slab whose hypothetical surfaces shade with a 2x2x2 albedo grid."""
    grid = AlbedoGrid.constant((2, 2, 2), UNIT_BOX, (rho, rho, rho))
    scene = Scene.assemble(
        [], SlabField(theta), DiffuseBsdf(grid), [EnvironmentEmitter((1.0, 1.0, 1.0))], [slab_camera(size)]
    )
    scene.extract_mean_surface()
    return scene


# =============================================================================
# Grid-backed fields
# =============================================================================

def sphere_mu(center=(0.0, 0.0, 0.0), radius: float = 0.5):
    c = np.asarray(center, dtype=np.float64)
    return lambda p: np.linalg.norm(p - c, axis=1) - radius


def grid_field(
    fn,
    resolution: int = 16,
    bounds: Aabb = UNIT_BOX,
    sigma: Optional[float] = None,
    facing: str = "opposes_ray",
) -> OccupancyField:
    cfg = FieldConfig(
        resolution=(resolution,) * 3,
        bounds=(bounds.lo, bounds.hi),
        sigma=sigma,
        facing=facing,
    )
    mu = ScalarGrid.from_function(cfg.resolution, bounds, fn)
    return OccupancyField.from_config(cfg, mu)


def empty_field(resolution: int = 8, bounds: Aabb = UNIT_BOX) -> OccupancyField:
    """Constant mu far above zero: alpha underflows to exactly 0."""
    cfg = FieldConfig(resolution=(resolution,) * 3, bounds=(bounds.lo, bounds.hi), init_mu_sigmas=60.0)
    return OccupancyField.from_config(cfg)


def orbit_cameras(n: int, distance: float = 2.6, size: int = 16, height: float = 0.6, fov: float = 40.0) -> List[Camera]:
    cams = []
    for i in range(n):
        a = 2.0 * math.pi * i / n
        pos = (distance * math.sin(a), height, distance * math.cos(a))
        cams.append(Camera(pos, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), fov, size, size))
    return cams


def _scene(meshes, field, mw_bsdf, cameras, env=1.0) -> Scene:
    scene = Scene.assemble(meshes, field, mw_bsdf, [EnvironmentEmitter((env, env, env))], cameras)
    if field is not None:
        scene.extract_mean_surface()
    return scene


def floor_quad(y: float = -0.6, half: float = 1.0) -> TriangleMesh:
    """Square in the plane y = const facing +y."""
    return quad_mesh((-half, y, -half), (0.0, 0.0, 2.0 * half), (2.0 * half, 0.0, 0.0))


def diffuse_plane_scene(resolution: int = 8, size: int = 16) -> Scene:
    """Diffuse floor under a constant environment with a blurred sphere floating above it."""
    floor = (floor_quad(-0.6), Material(DiffuseBsdf((0.5, 0.5, 0.5))))
    field = grid_field(sphere_mu((0.0, -0.1, 0.0), 0.35), resolution)
    cam = Camera((0.0, 0.8, 1.8), (0.0, -0.3, 0.0), (0.0, 1.0, 0.0), 45.0, size, size)
    return _scene([floor], field, DiffuseBsdf((0.5, 0.5, 0.5)), [cam])


def albedo_floor_scene(resolution: int = 8, size: int = 8) -> Scene:
    """diffuse_plane_scene with a floor shaded by an albedo grid the many-worlds BSDF ignores."""
    grid = AlbedoGrid.constant((4, 4, 4), UNIT_BOX, (0.5, 0.5, 0.5))
    floor = (floor_quad(-0.6), Material(DiffuseBsdf(grid)))
    field = grid_field(sphere_mu((0.0, -0.1, 0.0), 0.35), resolution)
    cam = Camera((0.0, 0.8, 1.8), (0.0, -0.3, 0.0), (0.0, 1.0, 0.0), 45.0, size, size)
    return _scene([floor], field, DiffuseBsdf((0.5, 0.5, 0.5)), [cam])


def sphere_scene(n_views: int = 8, size: int = 64, resolution: int = 32, radius: float = 0.5, albedo: float = 0.6):
    """
    Reconstruction setup: (scene starting from empty space, ground-truth mesh, ground-truth material).
    """
    cfg = FieldConfig(resolution=(resolution,) * 3, bounds=(UNIT_BOX.lo, UNIT_BOX.hi))
    field = OccupancyField.from_config(cfg)
    bsdf = DiffuseBsdf((albedo,) * 3)
    scene = _scene([], field, bsdf, orbit_cameras(n_views, size=size))
    return scene, icosphere(radius, 3), Material(bsdf)


def furnace_sphere_scene(size: int = 9, albedo: float = 0.5) -> Tuple[TriangleMesh, Material, Camera]:
    """Gray unit-ish sphere filling the center pixel of a camera on the +z axis."""
    cam = Camera((0.0, 0.0, 3.0), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 20.0, size, size)
    return icosphere(0.5, 3), Material(DiffuseBsdf((albedo,) * 3)), cam


def vgroove_scene(resolution: int = 16, size: int = 16, sigma: Optional[float] = None) -> Scene:
    """Solid below y = |x| - 0.5 (a V-shaped valley along z), diffuse, constant environment."""
    field = grid_field(lambda p: (p[:, 1] - (np.abs(p[:, 0]) - 0.5)) / math.sqrt(2.0), resolution, sigma=sigma)
    cam = Camera((0.0, 1.4, 0.0), (0.0, -0.5, 0.0), (0.0, 0.0, 1.0), 60.0, size, size)
    return _scene([], field, DiffuseBsdf((0.8, 0.8, 0.8)), [cam])


def mirror_box_scene(n_views: int = 4, size: int = 24, resolution: int = 16, albedo: float = 0.7):
    """
    A diffuse cube behind the cameras, visible only in a mirror at z = 2.2.

    Seeing the lit cube takes three segments: camera to mirror, mirror to cube,
    cube to environment.

    Returns (scene starting from empty space, ground-truth mesh, ground-truth material, mirror).
    """
    # edge_u x edge_v = -z, toward the cameras.
    mirror = (quad_mesh((-2.5, -2.5, 2.2), (0.0, 5.0, 0.0), (5.0, 0.0, 0.0)), Material(MirrorBsdf()))
    cams = []
    for i in range(n_views):
        a = 2.0 * math.pi * i / n_views
        pos = (0.3 * math.cos(a), 0.3 * math.sin(a), 1.2)
        # Aim at the cube's mirror image.
        cams.append(Camera(pos, (0.0, 0.0, 4.4), (0.0, 1.0, 0.0), 30.0, size, size))
    cfg = FieldConfig(resolution=(resolution,) * 3, bounds=(UNIT_BOX.lo, UNIT_BOX.hi))
    bsdf = DiffuseBsdf((albedo,) * 3)
    scene = _scene([mirror], OccupancyField.from_config(cfg), bsdf, cams)
    return scene, box_mesh((-0.35, -0.35, -0.35), (0.35, 0.35, 0.35)), Material(bsdf), mirror


def reference_images(
    scene: Scene, gt: TriangleMesh, material: Material, static: Sequence = (), spp: int = 64, seed: int = 7, k_max: int = 2
):
    """Surface-only renders of gt (plus static meshes) through the scene's cameras."""
    parts = [gt] + [mesh for mesh, _ in static]
    materials = [material] + [mat for _, mat in static]
    merged = merge_meshes(parts, material_ids=list(range(len(parts))))
    return make_references(merged, materials, scene.cameras, scene.emitters, spp, seed, k_max=k_max)
