"""
Adjoint pass.

Gradient samples retrace the primal path structure with their own seed. A
lane carries adjoint * throughput / grad_spp. At its selected segment k_mw it
estimates the background radiance (path stream) and the foreground radiance
through a many-worlds interaction (world stream), then scatters

    alpha:   sum_c w_c (L_fg - L_bg)            at the segment sample
    albedo:  w * occ * L_cont                    at the segment sample
    beta:    sum_c w_c occ 2 rho_c L_c(omega) omega   (diffuse, uniform hemisphere)

With relative motion on, a segment that starts on the mean surface also
receives the negated alpha weight at its origin.

The mean surface is never re-extracted inside a pass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from threading import Lock
from typing import List, Optional

import numpy as np

from ..config import GradConfig, PathConfig
from ..errors import DimensionMismatchError
from ..fields.albedo import scatter_albedo_gradient
from ..fields.gradients import GradientBuffer
from ..geometry.vec import dot, to_world
from ..transport.bsdf import DiffuseBsdf
from ..transport.camera import Camera, generate_rays
from ..transport.film import Image
from ..transport.integrator import NO_SEGMENT, PathTracer
from ..transport.sampling import tile_streams
from ..transport.scene import Scene
from ..transport.tiles import pixel_tiles, run_tiles

logger = logging.getLogger(__name__)


@dataclass
class BackpropStats:
    """Per-pass counters. segment_lanes[k] counts lanes that scattered on segment k."""
    samples: int = 0
    rejected: int = 0
    segment_lanes: List[int] = dc_field(default_factory=list)
    segment_magnitude: List[float] = dc_field(default_factory=list)
    _lock: Lock = dc_field(default_factory=Lock, repr=False, compare=False)

    def _grow(self, k: int) -> None:
        while len(self.segment_lanes) <= k:
            self.segment_lanes.append(0)
            self.segment_magnitude.append(0.0)

    def record(self, k: int, lanes: int, magnitude: float) -> None:
        with self._lock:
            self._grow(k)
            self.segment_lanes[k] += lanes
            self.segment_magnitude[k] += magnitude

    def count(self, samples: int = 0, rejected: int = 0) -> None:
        with self._lock:
            self.samples += samples
            self.rejected += rejected


def uniform_hemisphere(n: np.ndarray, u: np.ndarray) -> np.ndarray:
    z = u[:, 0]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * math.pi * u[:, 1]
    return to_world(np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1), n)


class AdjointTracer:
    """Gradient walk for one tile of lanes."""

    def __init__(self, scene: Scene, path_cfg: PathConfig, cfg: GradConfig, out: GradientBuffer, stats: BackpropStats):
        self.scene = scene
        self.field = scene.field
        self.cfg = cfg
        self.out = out
        self.stats = stats
        self.tracer = PathTracer(scene, path_cfg.k_max, path_cfg.world_samples)
        self.k_max = path_cfg.k_max
        self.n_t = path_cfg.world_samples
        self.albedo = scene.albedo_grid if out.d_albedo is not None else None
        self.diffuse = isinstance(scene.mw_bsdf, DiffuseBsdf)

    def run(self, o, d, weight, k_mw, path: np.random.Generator, world: np.random.Generator) -> None:
        n = len(o)
        t_min = np.zeros(n)
        on_mean = np.zeros(n, dtype=bool)
        keep_after_blend = self.cfg.surface_albedo_gradients and self.out.d_albedo is not None

        for k in range(min(self.cfg.k_ad, self.k_max)):
            if not len(o):
                break
            hits = self.scene.intersect(o, d, t_min)

            blend = k_mw == k
            if np.any(blend):
                self.segment_gradients(
                    o[blend], d[blend], hits.subset(blend), weight[blend], on_mean[blend], k, path, world
                )

            if k + 1 >= self.k_max:
                break
            go = hits.hit.copy() if keep_after_blend else hits.hit & (k_mw > k)
            if not np.any(go):
                break
            sub = hits.subset(go)
            wo = -d[go]
            wi, w = self.scene.sample_surface(sub, wo, path.random((int(go.sum()), 2)))
            if keep_after_blend:
                self.surface_albedo(sub, wi, w, weight[go], k_mw[go], k, world)

            weight = weight[go] * w
            alive = np.any(weight != 0.0, axis=1)
            o, d = sub.position[alive], wi[alive]
            weight, k_mw, on_mean = weight[alive], k_mw[go][alive], sub.on_mean[alive]
            t_min = np.full(len(o), self.scene.epsilon)

    def segment_gradients(self, o, d, hits, weight, on_mean, k, path, world) -> None:
        n = len(o)
        t_seg = np.where(hits.hit, hits.t, self.scene.field_exit(o, d))
        L_bg = self.tracer.background(
            o, d, hits, np.full(n, NO_SEGMENT), k, path, world, np.zeros(n, dtype=np.int64), np.zeros(1, dtype=np.int64)
        )
        w = weight / self.n_t
        if self.cfg.scale_by_segment:
            w = w * t_seg[:, None]

        for j in range(self.n_t):
            s = t_seg * (j + world.random(n)) / self.n_t
            x = o + s[:, None] * d
            inter = self.field.interacts(x, d)
            occ = np.where(inter, self.field.alpha(x), 0.0)

            L_cont = np.zeros((n, 3))
            w_fg = np.zeros((n, 3))
            normal, degenerate = self.tracer.shading_normals(x, d)
            if k + 1 < self.k_max:
                wi, w_fg = self.scene.mw_bsdf.sample(normal, -d, x, world.random((n, 2)))
                w_fg[degenerate] = 0.0
                go = np.any(w_fg > 0.0, axis=1)
                if np.any(go):
                    L_cont[go] = self.tracer.continuation(x[go], wi[go], k + 1, world)
            L_fg = w_fg * L_cont

            g_alpha = np.sum(w * (L_fg - L_bg), axis=1)
            g_albedo = None
            if self.albedo is not None:
                g_albedo = np.where(w_fg > 0.0, w * occ[:, None] * L_cont, 0.0)
            g_beta = None
            if self.diffuse and not self.cfg.detach_beta and k + 1 < self.k_max:
                g_beta = self.beta_gradient(x, d, normal, degenerate, occ, w, k, world)

            finite = np.isfinite(g_alpha)
            if g_albedo is not None:
                finite &= np.all(np.isfinite(g_albedo), axis=1)
            if g_beta is not None:
                finite &= np.all(np.isfinite(g_beta), axis=1)
            rejected = int((~finite).sum())
            if rejected:
                self.stats.count(rejected=rejected)

            m = inter & finite
            if np.any(m):
                self.field.scatter_alpha(self.out.d_mu, x[m], g_alpha[m])
                self.stats.record(k, int(m.sum()), float(np.abs(g_alpha[m]).sum()))
                if g_albedo is not None:
                    scatter_albedo_gradient(self.out, self.albedo, x[m], g_albedo[m])
                if g_beta is not None:
                    self.field.scatter_beta(self.out.d_mu, x[m], self.field.orientation_sign * g_beta[m])

            if self.cfg.relative_motion:
                r = m & on_mean
                if np.any(r):
                    self.field.scatter_alpha(self.out.d_mu, o[r], -g_alpha[r])

    def beta_gradient(self, x, d, normal, degenerate, occ, w, k, world) -> np.ndarray:
        n = len(x)
        g = np.zeros((n, 3))
        front = (dot(normal, -d) > 0.0) & ~degenerate & (occ > 0.0)
        omega = uniform_hemisphere(normal, world.random((n, 2)))
        if not np.any(front):
            return g
        L = self.tracer.continuation(x[front], omega[front], k + 1, world)
        rho = self.scene.mw_bsdf.reflectance(x[front])
        scale = np.sum(w[front] * 2.0 * rho * L, axis=1) * occ[front]
        g[front] = scale[:, None] * omega[front]
        return g

    def surface_albedo(self, hits, wi, w, weight, k_mw, k, world) -> None:
        """d/d rho of a grid-shaded surface bounce: throughput * downstream radiance."""
        sel = self.scene.reads_albedo_grid(hits) & np.any(w > 0.0, axis=1)
        if not np.any(sel):
            return
        count = int(sel.sum())
        L = self.tracer.li_k(
            hits.position[sel], wi[sel], self.scene.epsilon, k_mw[sel], k + 1, world, world,
            np.zeros(count, dtype=np.int64), np.zeros(1, dtype=np.int64),
        )
        g = np.where(w[sel] > 0.0, weight[sel] * L, 0.0)
        finite = np.all(np.isfinite(g), axis=1)
        if not np.all(finite):
            self.stats.count(rejected=int((~finite).sum()))
        scatter_albedo_gradient(self.out, self.scene.albedo_grid, hits.position[sel][finite], g[finite])


def backpropagate(
    scene: Scene,
    camera: Camera,
    adjoint_img: Image,
    cfg: GradConfig,
    out: GradientBuffer,
    *,
    path_cfg: Optional[PathConfig] = None,
    workers: int = 1,
    deterministic: bool = True,
    pass_id: int = 0,
    stats: Optional[BackpropStats] = None,
) -> BackpropStats:
    """
    Accumulate d loss / d parameters for one view into out.

    Deterministic mode reduces per-tile buffers in tile order; otherwise tiles
    add into out under a lock as they finish.
    """
    path_cfg = path_cfg or PathConfig()
    stats = stats if stats is not None else BackpropStats()
    if scene.field is None:
        raise ValueError("backpropagate needs a scene with a many-worlds field")
    scene.check_fresh()
    if (adjoint_img.width, adjoint_img.height) != (camera.width, camera.height):
        raise DimensionMismatchError(
            f"adjoint image {adjoint_img.width}x{adjoint_img.height} vs camera {camera.width}x{camera.height}"
        )
    if not np.any(adjoint_img.pixels):
        return stats

    width = camera.width
    adjoint = adjoint_img.pixels.reshape(-1, 3)
    tiles = pixel_tiles(camera.width * camera.height, path_cfg.tile_size)
    spp = cfg.grad_spp
    lock = Lock()

    def work(tile: int) -> Optional[GradientBuffer]:
        start, end = tiles[tile]
        streams = tile_streams(cfg.seed, pass_id, tile)
        pixels = np.repeat(np.arange(start, end), spp)
        jitter = streams.path.random((len(pixels), 2))
        rays = generate_rays(camera, pixels % width, pixels // width, jitter)
        k_mw = streams.world.integers(0, path_cfg.k_max, size=len(pixels))
        weight = adjoint[pixels] / spp

        local = out.like()
        live = k_mw < cfg.k_ad
        AdjointTracer(scene, path_cfg, cfg, local, stats).run(
            rays.origins[live], rays.directions[live], weight[live], k_mw[live], streams.path, streams.world
        )
        stats.count(samples=len(pixels))
        if deterministic:
            return local
        with lock:
            out.add(local)
        return None

    def reduce(tile: int, local: Optional[GradientBuffer]) -> None:
        if local is not None:
            out.add(local)

    run_tiles(work, len(tiles), reduce, workers=workers, ordered=deterministic)

    if stats.rejected:
        logger.warning(f"Rejected {stats.rejected} non-finite gradient sample(s)")
    logger.debug(f"Backpropagated {stats.samples} samples, lanes per segment {stats.segment_lanes}")
    return stats
