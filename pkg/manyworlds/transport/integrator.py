"""
Many-worlds path tracing.

Each camera path selects one segment k_mw uniformly from {0, ..., k_max-1}.
On every segment the estimator first traces the detached mean scene to get
the background radiance. On the selected segment it also samples a point
uniformly along the segment, looks up the occupancy there and shades a
hypothetical surface oriented by beta, then returns

    (1 - occ) * L_bg + occ * L_fg

No transmittance is tracked and at most one blend happens per path. The
uniform segment pdf cancels the 1/t of the line integral, so the blend has
no extra 1/t factor.

All functions work on lane batches: one lane is one (pixel, sample) pair.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from threading import Lock
from typing import Optional, Tuple

import numpy as np

from ..config import PathConfig
from ..geometry.vec import Ray
from .camera import Camera, generate_rays
from .emitters import eval_env
from .film import Image
from .sampling import RngStreams, tile_streams
from .scene import Scene, SceneHits
from .tiles import pixel_tiles, run_tiles

logger = logging.getLogger(__name__)

NO_SEGMENT = -1


@dataclass
class RenderStats:
    """Counters filled by a render pass."""
    samples: int = 0
    rejected: int = 0
    blends: int = 0
    max_blends_per_sample: int = 0
    _lock: Lock = dc_field(default_factory=Lock, repr=False, compare=False)

    def add(self, samples: int, rejected: int, blend_counts: np.ndarray) -> None:
        with self._lock:
            self.samples += samples
            self.rejected += rejected
            self.blends += int(blend_counts.sum())
            if len(blend_counts):
                self.max_blends_per_sample = max(self.max_blends_per_sample, int(blend_counts.max()))


class PathTracer:
    """
    Vectorized recursive estimator over a read-only scene.

    With many_worlds=False it is the plain surface path tracer: only the
    path stream is consumed and no blend is ever evaluated.
    """

    def __init__(self, scene: Scene, k_max: int, world_samples: int = 1, many_worlds: bool = True):
        if k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {k_max}")
        self.scene = scene
        self.k_max = k_max
        self.world_samples = world_samples
        self.many_worlds = many_worlds and scene.field is not None

    def radiance(
        self, origins: np.ndarray, directions: np.ndarray, streams: RngStreams
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Estimate per lane. Returns (L (N, 3), blends per lane (N,))."""
        n = len(origins)
        if self.many_worlds:
            k_mw = streams.world.integers(0, self.k_max, size=n)
        else:
            k_mw = np.full(n, NO_SEGMENT)
        counts = np.zeros(n, dtype=np.int64)
        L = self.li_k(origins, directions, 0.0, k_mw, 0, streams.path, streams.world, np.arange(n), counts)
        return L, counts

    def li_k(
        self,
        o: np.ndarray,
        d: np.ndarray,
        t_min,
        k_mw: np.ndarray,
        k: int,
        rng: np.random.Generator,
        world: np.random.Generator,
        lanes: np.ndarray,
        counts: np.ndarray,
    ) -> np.ndarray:
        """
        Radiance arriving along segment k.

        rng drives surface scattering (the path stream on the background
        path, the world stream inside a foreground continuation); world drives
        the many-worlds samples.
        """
        n = len(o)
        if n == 0 or k >= self.k_max:
            return np.zeros((n, 3))

        hits = self.scene.intersect(o, d, t_min)
        L = self.background(o, d, hits, k_mw, k, rng, world, lanes, counts)

        mw = k_mw == k
        if np.any(mw):
            t_seg = np.where(hits.hit, hits.t, self.scene.field_exit(o, d))
            L[mw] = self.blend(o[mw], d[mw], t_seg[mw], L[mw], k, world)
            np.add.at(counts, lanes[mw], 1)
        return L

    def background(self, o, d, hits: SceneHits, k_mw, k, rng, world, lanes, counts) -> np.ndarray:
        """Emitted plus scattered radiance at the mean-scene endpoint, env on a miss."""
        n = len(o)
        L = np.zeros((n, 3))
        miss = ~hits.hit
        if np.any(miss):
            L[miss] = eval_env(self.scene.emitters, d[miss])
        if not np.any(hits.hit):
            return L

        idx = np.nonzero(hits.hit)[0]
        sub = hits.subset(idx)
        L[idx] = self.scene.emitted(sub, d[idx])
        if k + 1 >= self.k_max:
            return L

        u = rng.random((len(idx), 2))
        wi, w = self.scene.sample_surface(sub, -d[idx], u)
        go = np.any(w > 0.0, axis=1)
        if np.any(go):
            cont = idx[go]
            L_next = self.li_k(
                sub.position[go], wi[go], self.scene.epsilon, k_mw[cont], k + 1, rng, world, lanes[cont], counts
            )
            L[cont] = L[cont] + w[go] * L_next
        return L

    def blend(self, o, d, t_seg, L_bg, k, world) -> np.ndarray:
        """Average of world_samples stratified lerps along each segment."""
        n = len(o)
        acc = np.zeros((n, 3))
        for j in range(self.world_samples):
            s = t_seg * (j + world.random(n)) / self.world_samples
            x = o + s[:, None] * d
            occ = self.scene.field.alpha_plus(x, d)
            L_fg = self.foreground(x, d, k, world)
            acc += (1.0 - occ)[:, None] * L_bg + occ[:, None] * L_fg
        if self.world_samples > 1:
            acc /= self.world_samples
        return acc

    def foreground(self, x, d, k, world, u: Optional[np.ndarray] = None) -> np.ndarray:
        """Radiance leaving a hypothetical surface at x toward -d."""
        n = len(x)
        if k + 1 >= self.k_max:
            return np.zeros((n, 3))
        normal, degenerate = self.shading_normals(x, d)
        if u is None:
            u = world.random((n, 2))
        wi, w = self.scene.mw_bsdf.sample(normal, -d, x, u)
        w[degenerate] = 0.0
        L = np.zeros((n, 3))
        go = np.any(w > 0.0, axis=1)
        if np.any(go):
            L[go] = w[go] * self.continuation(x[go], wi[go], k + 1, world)
        return L

    def continuation(self, x, wi, k, rng) -> np.ndarray:
        """Surface-only radiance from segment k on; no further blends."""
        n = len(x)
        return self.li_k(
            x, wi, 0.0, np.full(n, NO_SEGMENT), k, rng, rng, np.zeros(n, dtype=np.int64), np.zeros(1, dtype=np.int64)
        )

    def shading_normals(self, x, d) -> Tuple[np.ndarray, np.ndarray]:
        field = self.scene.field
        beta = field.beta(x) * field.orientation_sign
        degenerate = ~np.any(beta != 0.0, axis=1)
        # Any unit normal will do where beta is undefined; those lanes get zero weight.
        normal = np.where(degenerate[:, None], -d, beta)
        return normal, degenerate


# =============================================================================
# Single-ray interface
# =============================================================================

def li(scene: Scene, ray: Ray, rng: RngStreams, cfg: PathConfig) -> np.ndarray:
    """One many-worlds sample along a ray (RGB)."""
    tracer = PathTracer(scene, cfg.k_max, cfg.world_samples)
    L, _ = tracer.radiance(ray.origin[None, :], ray.direction[None, :], rng)
    return L[0]


def li_k(scene: Scene, ray: Ray, k_mw: int, k: int, rng: RngStreams, k_max: int, world_samples: int = 1) -> np.ndarray:
    """Radiance along segment k of a path whose blend happens on segment k_mw. k > k_max gives 0."""
    if k > k_max:
        return np.zeros(3)
    tracer = PathTracer(scene, k_max, world_samples)
    counts = np.zeros(1, dtype=np.int64)
    L = tracer.li_k(
        ray.origin[None, :], ray.direction[None, :], ray.t_min, np.array([k_mw]), k,
        rng.path, rng.world, np.zeros(1, dtype=np.int64), counts,
    )
    return L[0]


# =============================================================================
# Image passes
# =============================================================================

def render_primal(
    scene: Scene,
    camera: Camera,
    cfg: PathConfig,
    *,
    workers: int = 1,
    pass_id: int = 0,
    stats: Optional[RenderStats] = None,
    many_worlds: bool = True,
) -> Image:
    """
    Per-pixel mean of cfg.spp estimates.

    Non-finite samples are dropped (and counted) before averaging. Tiles own
    their random streams, so the image doesn't depend on the worker count.
    """
    scene.check_fresh()
    stats = stats if stats is not None else RenderStats()
    width, height = camera.width, camera.height
    tiles = pixel_tiles(width * height, cfg.tile_size)
    flat = np.zeros((width * height, 3))
    spp = cfg.spp

    def work(tile: int):
        start, end = tiles[tile]
        streams = tile_streams(cfg.seed, pass_id, tile)
        lanes = np.repeat(np.arange(start, end), spp)
        jitter = streams.path.random((len(lanes), 2))
        rays = generate_rays(camera, lanes % width, lanes // width, jitter)
        tracer = PathTracer(scene, cfg.k_max, cfg.world_samples, many_worlds=many_worlds)
        L, blends = tracer.radiance(rays.origins, rays.directions, streams)
        finite = np.all(np.isfinite(L), axis=1)
        L = np.where(finite[:, None], L, 0.0).reshape(end - start, spp, 3)
        accepted = finite.reshape(end - start, spp).sum(axis=1)
        values = L.sum(axis=1) / np.maximum(accepted, 1)[:, None]
        stats.add(len(lanes), int((~finite).sum()), blends)
        return values

    def collect(tile: int, values: np.ndarray) -> None:
        start, end = tiles[tile]
        flat[start:end] = values

    run_tiles(work, len(tiles), collect, workers=workers, ordered=True)

    if stats.rejected:
        logger.warning(f"Rejected {stats.rejected} non-finite sample(s) of {stats.samples}")
    logger.debug(f"Rendered {width}x{height} at {spp} spp, {stats.blends} blends")
    return Image(flat.reshape(height, width, 3))


def render_surface(scene: Scene, camera: Camera, cfg: PathConfig, **kwargs) -> Image:
    """Plain surface path tracing of the same scene (no many-worlds blend)."""
    return render_primal(scene, camera, cfg, many_worlds=False, **kwargs)
