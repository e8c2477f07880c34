"""
Scene container.

Static geometry (known meshes plus emissive rectangles) is merged into one
BVH at build time. The mean surface has its own slot, rebuilt whenever the
occupancy field changes; a generation counter guards against tracing a mesh
extracted from an older field.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import FieldConfig
from ..errors import StaleMeanSurfaceError
from ..fields.albedo import AlbedoGrid
from ..fields.checkpoint import load_grid
from ..fields.grid import ScalarGrid
from ..fields.occupancy import OccupancyField, OccupancyModel
from ..geometry.bvh import aabb_exit_distances, build_accelerator, scene_diagonal
from ..geometry.mesh import TriangleMesh, merge_meshes
from ..geometry.obj import load_obj
from ..geometry.vec import Aabb, RayBatch, dot
from ..schemas import BsdfSpec, SceneDescription, load_scene_description
from .bsdf import BLACK, Bsdf, DiffuseBsdf, MirrorBsdf
from .camera import Camera
from .emitters import Emitter, EnvironmentEmitter, RectangleEmitter

logger = logging.getLogger(__name__)

MEAN_SURFACE = -1
NO_HIT = -2


@dataclass(frozen=True)
class Material:
    bsdf: Bsdf
    emission: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def is_emissive(self) -> bool:
        return any(c > 0.0 for c in self.emission)


@dataclass
class SceneHits:
    """Nearest hit against static and mean-surface geometry."""
    t: np.ndarray
    hit: np.ndarray
    material: np.ndarray  # static material id, MEAN_SURFACE or NO_HIT
    on_mean: np.ndarray
    position: np.ndarray
    normal: np.ndarray

    def subset(self, mask) -> "SceneHits":
        return SceneHits(
            self.t[mask], self.hit[mask], self.material[mask],
            self.on_mean[mask], self.position[mask], self.normal[mask],
        )


class Scene:
    """Everything a render or adjoint pass reads."""

    def __init__(
        self,
        static_mesh: TriangleMesh,
        materials: Sequence[Material],
        field: Optional[OccupancyModel],
        mw_bsdf: Bsdf = BLACK,
        emitters: Sequence[Emitter] = (),
        cameras: Sequence[Camera] = (),
        ray_epsilon: float = 1e-4,
    ):
        if static_mesh.n_faces and static_mesh.material_ids.max() >= len(materials):
            raise ValueError("static mesh references an undefined material")
        self.static_mesh = static_mesh
        self.materials = list(materials)
        self.field = field
        self.mw_bsdf = mw_bsdf
        self.emitters = list(emitters)
        self.cameras = list(cameras)
        self.static_accel = build_accelerator(static_mesh)

        self.mean_mesh = TriangleMesh.empty()
        self.mean_accel = build_accelerator(self.mean_mesh)
        self.mean_version: Optional[int] = None
        self._frozen = False

        self.diagonal = scene_diagonal(
            static_mesh.bounds(), None if field is None else field.bounds
        )
        self.epsilon = ray_epsilon * self.diagonal
        self._emission = np.array([m.emission for m in self.materials]).reshape(-1, 3)

    @classmethod
    def assemble(
        cls,
        meshes: Sequence[Tuple[TriangleMesh, Material]],
        field: Optional[OccupancyModel],
        mw_bsdf: Bsdf = BLACK,
        emitters: Sequence[Emitter] = (),
        cameras: Sequence[Camera] = (),
        ray_epsilon: float = 1e-4,
    ) -> "Scene":
        """Merge meshes (one material each) and rectangle emitters into the static BVH."""
        parts: List[TriangleMesh] = []
        materials: List[Material] = []
        for mesh, material in meshes:
            parts.append(mesh)
            materials.append(material)
        for e in emitters:
            if isinstance(e, RectangleEmitter):
                parts.append(e.mesh())
                materials.append(Material(BLACK, e.radiance))
        static = merge_meshes(parts, material_ids=list(range(len(parts))))
        return cls(static, materials, field, mw_bsdf, emitters, cameras, ray_epsilon)

    @property
    def albedo_grid(self) -> Optional[AlbedoGrid]:
        """The albedo grid of the many-worlds BSDF; None when it shades with a constant."""
        return self.mw_bsdf.albedo_grid

    # -------------------------------------------------------------------------
    # Mean surface
    # -------------------------------------------------------------------------

    def set_mean_surface(self, mesh: TriangleMesh, version: Optional[int] = None) -> None:
        self.mean_mesh = mesh
        self.mean_accel = build_accelerator(mesh)
        self.mean_version = version if version is not None else (
            None if self.field is None else self.field.version
        )

    def extract_mean_surface(self) -> TriangleMesh:
        """Re-extract from the current field and tag with its version."""
        if self.field is None:
            mesh = TriangleMesh.empty()
        else:
            mesh = self.field.mean_surface()
        self.set_mean_surface(mesh)
        logger.debug(f"Mean surface: {mesh.n_faces} faces (field version {self.mean_version})")
        return mesh

    def check_fresh(self) -> None:
        """Raise StaleMeanSurfaceError if the mean surface lags the field."""
        if self.field is None or self._frozen:
            return
        if self.mean_version != self.field.version:
            raise StaleMeanSurfaceError(
                f"mean surface is from field version {self.mean_version}, field is at {self.field.version}"
            )

    @contextmanager
    def frozen_mean_surface(self) -> Iterator["Scene"]:
        """Keep the current mean surface while the field is perturbed."""
        previous = self._frozen
        self._frozen = True
        try:
            yield self
        finally:
            self._frozen = previous

    # -------------------------------------------------------------------------
    # Queries used by the integrators
    # -------------------------------------------------------------------------

    def intersect(self, origins: np.ndarray, directions: np.ndarray, t_min) -> SceneHits:
        rays = RayBatch(origins, directions, np.broadcast_to(t_min, len(origins)).astype(np.float64),
                        np.full(len(origins), np.inf))
        hs = self.static_accel.intersect(rays)
        hm = self.mean_accel.intersect(rays)
        use_mean = hm.t < hs.t
        t = np.where(use_mean, hm.t, hs.t)
        material = np.where(use_mean, MEAN_SURFACE, np.where(hs.hit, hs.mesh_id, NO_HIT))
        return SceneHits(
            t=t,
            hit=np.isfinite(t),
            material=material,
            on_mean=use_mean,
            position=np.where(use_mean[:, None], hm.position, hs.position),
            normal=np.where(use_mean[:, None], hm.normal, hs.normal),
        )

    def field_exit(self, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
        if self.field is None:
            return np.zeros(len(origins))
        return aabb_exit_distances(origins, directions, self.field.bounds)

    def emitted(self, hits: SceneHits, directions: np.ndarray) -> np.ndarray:
        """Front-side emission of static hits, (N, 3)."""
        out = np.zeros((len(hits.t), 3))
        static = hits.hit & ~hits.on_mean
        if not np.any(static) or not len(self._emission):
            return out
        front = dot(hits.normal, directions) < 0.0
        lit = static & front
        out[lit] = self._emission[hits.material[lit]]
        return out

    def sample_surface(self, hits: SceneHits, wo: np.ndarray, u: np.ndarray):
        """BSDF sampling at hit points; mean-surface hits use the many-worlds BSDF."""
        n = len(wo)
        wi = np.zeros((n, 3))
        weight = np.zeros((n, 3))
        for m in np.unique(hits.material):
            sel = hits.material == m
            bsdf = self.mw_bsdf if m == MEAN_SURFACE else self.materials[m].bsdf
            wi[sel], weight[sel] = bsdf.sample(hits.normal[sel], wo[sel], hits.position[sel], u[sel])
        return wi, weight

    def reads_albedo_grid(self, hits: SceneHits) -> np.ndarray:
        """Which hits shade with the many-worlds albedo grid."""
        grid = self.albedo_grid
        if grid is None:
            return np.zeros(len(hits.hit), dtype=bool)
        uses = np.array([m.bsdf.albedo_grid is grid for m in self.materials] + [True], dtype=bool)
        out = uses[np.where(hits.material >= 0, hits.material, len(self.materials))]
        return out & hits.hit


# =============================================================================
# Building from JSON
# =============================================================================

def bsdf_from_spec(spec: BsdfSpec, albedo_grid: Optional[AlbedoGrid] = None) -> Bsdf:
    if spec.kind == "mirror":
        return MirrorBsdf()
    if spec.use_albedo_grid:
        if albedo_grid is None:
            raise ValueError("BSDF requests the albedo grid but the scene defines none")
        return DiffuseBsdf(albedo_grid)
    return DiffuseBsdf(spec.albedo)


def build_field(
    desc: SceneDescription,
    base_dir: Path,
    defaults: Optional[FieldConfig] = None,
) -> OccupancyField:
    """Entries the scene leaves unset come from `defaults` (the YAML `field:` section)."""
    defaults = defaults or FieldConfig()
    spec = desc.field
    grid_file = load_grid(base_dir / spec.grid) if spec.grid else None
    if spec.bounds is not None:
        bounds = spec.bounds
    elif grid_file is not None:
        bounds = (grid_file.bounds.lo, grid_file.bounds.hi)
    else:
        bounds = defaults.bounds
    if grid_file is not None:
        resolution = grid_file.values.shape[:3]
    else:
        resolution = spec.resolution or defaults.resolution
    sigma = spec.sigma
    if sigma is None and grid_file is not None and grid_file.sigma > 0:
        sigma = grid_file.sigma
    if sigma is None:
        sigma = defaults.sigma
    cfg = FieldConfig(
        resolution=tuple(resolution),
        bounds=bounds,
        sigma=sigma,
        sigma_voxels=defaults.sigma_voxels if spec.sigma_voxels is None else spec.sigma_voxels,
        init_mu_sigmas=defaults.init_mu_sigmas if spec.init_mu_sigmas is None else spec.init_mu_sigmas,
        facing=spec.facing or defaults.facing,
    )
    mu = None
    if grid_file is not None:
        mu = ScalarGrid(grid_file.values, Aabb(*bounds))
    return OccupancyField.from_config(cfg, mu)


def build_scene(
    desc: SceneDescription,
    base_dir: Union[str, Path] = ".",
    include_ground_truth: bool = False,
    include_field: bool = True,
    field_defaults: Optional[FieldConfig] = None,
) -> Scene:
    """
    Turn a validated description into a Scene.

    Reference renders use include_ground_truth=True and include_field=False:
    the target shape becomes static geometry and no many-worlds field exists.
    """
    base_dir = Path(base_dir)
    field = build_field(desc, base_dir, field_defaults) if include_field else None

    albedo = None
    if desc.albedo is not None:
        if field is not None:
            bounds = field.bounds
        else:
            bounds = Aabb(*(desc.field.bounds or (field_defaults or FieldConfig()).bounds))
        if desc.albedo.grid:
            values = load_grid(base_dir / desc.albedo.grid).values
            albedo = AlbedoGrid(values, bounds)
        else:
            albedo = AlbedoGrid.constant(desc.albedo.resolution, bounds, desc.albedo.initial)

    meshes = []
    for spec in desc.meshes:
        meshes.append((load_obj(base_dir / spec.path), Material(bsdf_from_spec(spec.bsdf, albedo), spec.emission)))
    if include_ground_truth and desc.ground_truth is not None:
        gt = desc.ground_truth
        meshes.append((load_obj(base_dir / gt.path), Material(bsdf_from_spec(gt.bsdf, albedo), gt.emission)))

    emitters: List[Emitter] = []
    for e in desc.emitters:
        if e.kind == "environment":
            emitters.append(EnvironmentEmitter(e.radiance))
        else:
            emitters.append(RectangleEmitter(e.corner, e.edge_u, e.edge_v, e.radiance))

    cameras = [Camera(c.position, c.target, c.up, c.fov, c.width, c.height) for c in desc.cameras]
    scene = Scene.assemble(
        meshes,
        field,
        bsdf_from_spec(desc.many_worlds_bsdf, albedo),
        emitters,
        cameras,
        desc.ray_epsilon,
    )
    if field is not None:
        scene.extract_mean_surface()
    logger.info(
        f"Scene: {scene.static_mesh.n_faces} static faces, {len(cameras)} camera(s), "
        f"mean surface {scene.mean_mesh.n_faces} faces"
    )
    return scene


def load_scene(path: Union[str, Path], **kwargs) -> Scene:
    path = Path(path)
    return build_scene(load_scene_description(path), path.parent, **kwargs)
