"""Tests for cameras, materials, film, scheduling and the many-worlds path tracer."""
from __future__ import annotations

import json
import math

import numpy as np
import pytest

from manyworlds.config import FieldConfig, PathConfig
from manyworlds.errors import NonFiniteError, StaleMeanSurfaceError
from manyworlds.extraction import export_obj
from manyworlds.geometry.mesh import box_mesh
from manyworlds.geometry.vec import Ray
from manyworlds.transport.bsdf import BLACK, DiffuseBsdf, MirrorBsdf, sample_bsdf
from manyworlds.transport.camera import Camera, generate_ray
from manyworlds.transport.emitters import EnvironmentEmitter, RectangleEmitter, eval_env
from manyworlds.transport.film import Image, read_pfm, save_image, to_srgb8, write_pfm
from manyworlds.transport.integrator import (
    PathTracer,
    RenderStats,
    li,
    li_k,
    render_primal,
    render_surface,
)
from manyworlds.transport.sampling import single_streams, tile_streams
from manyworlds.transport.scene import MEAN_SURFACE, NO_HIT, Material, Scene, load_scene
from manyworlds.transport.tiles import pixel_tiles, run_tiles
from tests.mocks import scenes


# =============================================================================
# Building blocks
# =============================================================================

class TestCamera:
    """Tests for the pinhole camera."""

    def test_center_ray_is_forward(self):
        """Test that the film center looks at the target."""
        cam = Camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 40.0, 9, 9)
        ray = generate_ray(cam, (4, 4))

        np.testing.assert_allclose(ray.direction, [0, 0, -1], atol=1e-12)
        np.testing.assert_allclose(ray.origin, [0, 0, 5])

    def test_top_row_looks_up(self):
        """Test that row 0 is the top of the image."""
        cam = Camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 40.0, 8, 8)

        assert generate_ray(cam, (4, 0)).direction[1] > 0.0
        assert generate_ray(cam, (7, 4)).direction[0] > 0.0

    def test_jitter_stays_in_pixel(self):
        """Test that jittered rays fall within the pixel footprint."""
        cam = Camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 40.0, 8, 8)
        rng = np.random.default_rng(0)
        left = generate_ray(cam, (2, 3)).direction
        jittered = generate_ray(cam, (2, 3), rng).direction

        assert np.linalg.norm(left - jittered) < 2.0 * math.tan(math.radians(20.0)) / 8.0

    def test_invalid(self):
        """Test rejected parameters."""
        with pytest.raises(ValueError):
            Camera((0, 0, 0), (0, 0, 0))
        with pytest.raises(ValueError):
            Camera((0, 0, 0), (0, 1, 0), (0, 1, 0))
        with pytest.raises(ValueError):
            Camera((0, 0, 1), (0, 0, 0), fov=180.0)
        with pytest.raises(ValueError):
            generate_ray(Camera((0, 0, 1), (0, 0, 0), width=4, height=4), (4, 0))


class TestBsdf:
    """Tests for the surface models."""

    def test_diffuse_weight_is_albedo(self):
        """Test that cosine sampling gives weight = albedo in the upper hemisphere."""
        rng = np.random.default_rng(1)
        n = np.tile([0.0, 0.0, 1.0], (100, 1))
        wi, w = sample_bsdf(DiffuseBsdf((0.2, 0.4, 0.6)), n, n, np.zeros((100, 3)), rng)

        np.testing.assert_allclose(w, np.tile([0.2, 0.4, 0.6], (100, 1)))
        assert np.all(wi[:, 2] >= 0.0)
        np.testing.assert_allclose(np.linalg.norm(wi, axis=1), 1.0)

    def test_one_sided(self):
        """Test that directions from behind get zero weight."""
        rng = np.random.default_rng(2)
        _, w = sample_bsdf(DiffuseBsdf(), np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]), np.zeros(3), rng)
        _, wm = sample_bsdf(MirrorBsdf(), np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]), np.zeros(3), rng)

        np.testing.assert_array_equal(w, np.zeros(3))
        np.testing.assert_array_equal(wm, np.zeros(3))

    def test_mirror_reflection(self):
        """Test perfect specular reflection with unit weight."""
        rng = np.random.default_rng(3)
        wo = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
        wi, w = sample_bsdf(MirrorBsdf(), np.array([0.0, 0.0, 1.0]), wo, np.zeros(3), rng)

        np.testing.assert_allclose(wi, [-wo[0], 0.0, wo[2]])
        np.testing.assert_array_equal(w, np.ones(3))

    def test_albedo_range(self):
        """Test that albedo outside [0, 1] is rejected."""
        with pytest.raises(ValueError):
            DiffuseBsdf((1.1, 0.5, 0.5))


class TestEmitters:
    """Tests for emitters."""

    def test_environment_sum(self):
        """Test that environments add and rectangles don't count as environment."""
        emitters = [
            EnvironmentEmitter((1.0, 0.5, 0.0)),
            EnvironmentEmitter((0.5, 0.5, 0.5)),
            RectangleEmitter((0, 0, 0), (1, 0, 0), (0, 1, 0), (9.0, 9.0, 9.0)),
        ]

        np.testing.assert_allclose(eval_env(emitters, np.array([0.0, 1.0, 0.0])), [1.5, 1.0, 0.5])

    def test_no_environment_is_black(self):
        """Test escaping rays without an environment."""
        np.testing.assert_array_equal(eval_env([], np.zeros((2, 3))), np.zeros((2, 3)))

    def test_rectangle_needs_area(self):
        """Test that parallel edges are rejected."""
        with pytest.raises(ValueError):
            RectangleEmitter((0, 0, 0), (1, 0, 0), (2, 0, 0), (1.0, 1.0, 1.0))

    def test_negative_radiance(self):
        """Test that negative radiance is rejected."""
        with pytest.raises(ValueError):
            EnvironmentEmitter((-1.0, 0.0, 0.0))


class TestFilm:
    """Tests for images and their files."""

    def test_pfm_keeps_values_and_orientation(self, tmp_path, gradient_image):
        """Test that PFM preserves float32 values with row 0 on top."""
        path = write_pfm(gradient_image, tmp_path / "img.pfm")
        loaded = read_pfm(path)

        np.testing.assert_allclose(loaded.pixels, gradient_image.pixels.astype(np.float32))
        assert loaded.shape == (3, 4, 3)

    def test_grayscale_pfm(self, tmp_path):
        """Test that single-channel PFM files expand to RGB."""
        path = tmp_path / "gray.pfm"
        data = np.array([[1.0, 2.0], [3.0, 4.0]], dtype="<f4")  # bottom row first
        path.write_bytes(b"Pf\n2 2\n-1.0\n" + data.tobytes())
        img = read_pfm(path)

        np.testing.assert_array_equal(img.pixels[0, :, 0], [3.0, 4.0])
        np.testing.assert_array_equal(img.pixels[1, 1], [2.0, 2.0, 2.0])

    def test_not_a_pfm(self, tmp_path):
        """Test that other files are rejected."""
        path = tmp_path / "x.pfm"
        path.write_bytes(b"P6\n1 1\n255\n\0\0\0")
        with pytest.raises(ValueError):
            read_pfm(path)

    def test_srgb_preview(self):
        """Test the tone curve and clamping of PNG previews."""
        img = Image(np.array([[[0.0, 0.5, 1.0], [2.0, -1.0, 1.0]]]))
        px = to_srgb8(img)

        assert px[0, 0].tolist() == [0, round(0.5 ** (1 / 2.2) * 255), 255]
        assert px[0, 1].tolist() == [255, 0, 255]

    def test_save_image(self, tmp_path, gradient_image):
        """Test that save_image writes both files."""
        pfm, png = save_image(gradient_image, tmp_path / "sub" / "ref_00")

        assert pfm.name == "ref_00.pfm" and pfm.exists()
        assert png.name == "ref_00.png" and png.exists()

    def test_non_finite_rejected(self):
        """Test that NaN pixels can't enter an image."""
        with pytest.raises(NonFiniteError):
            Image(np.full((1, 1, 3), math.nan))


class TestScheduling:
    """Tests for tiles and random streams."""

    def test_pixel_tiles_cover(self):
        """Test that tiles partition the pixel range."""
        tiles = pixel_tiles(70, 16)

        assert tiles[0] == (0, 16)
        assert tiles[-1] == (64, 70)
        assert sum(e - s for s, e in tiles) == 70

    @pytest.mark.parametrize("workers", [1, 4])
    def test_ordered_results(self, workers):
        """Test that ordered mode hands results over in tile order."""
        seen = []
        run_tiles(lambda i: i * i, 9, lambda i, v: seen.append((i, v)), workers=workers, ordered=True)

        assert seen == [(i, i * i) for i in range(9)]

    def test_exceptions_propagate(self):
        """Test that a failing tile fails the pass."""
        def work(i):
            if i == 2:
                raise RuntimeError("tile failed")
            return i

        with pytest.raises(RuntimeError, match="tile failed"):
            run_tiles(work, 4, lambda i, v: None, workers=2)

    def test_streams_reproducible(self):
        """Test that a (seed, pass, tile) triple always gives the same numbers."""
        a = tile_streams(5, 2, 3)
        b = tile_streams(5, 2, 3)

        np.testing.assert_array_equal(a.path.random(4), b.path.random(4))
        np.testing.assert_array_equal(a.world.random(4), b.world.random(4))

    def test_streams_independent(self):
        """Test that path and world streams, tiles and passes differ."""
        a = tile_streams(5, 2, 3)
        first = a.path.random(4)

        assert not np.array_equal(first, a.world.random(4))
        assert not np.array_equal(first, tile_streams(5, 2, 4).path.random(4))
        assert not np.array_equal(first, tile_streams(5, 3, 3).path.random(4))


# =============================================================================
# Scene
# =============================================================================

class TestScene:
    """Tests for scene queries."""

    def test_stale_mean_surface(self, sphere_field, path_cfg):
        """Test that rendering after a parameter change without extraction fails."""
        scene = Scene.assemble([], sphere_field, BLACK, [EnvironmentEmitter((1, 1, 1))],
                               [scenes.slab_camera()])
        scene.extract_mean_surface()
        sphere_field.parameters[0, 0, 0] += 0.1
        sphere_field.mark_updated()

        with pytest.raises(StaleMeanSurfaceError):
            render_primal(scene, scene.cameras[0], path_cfg)

    def test_frozen_mean_surface(self, sphere_field, path_cfg):
        """Test that a frozen scene tolerates field changes."""
        scene = Scene.assemble([], sphere_field, BLACK, [EnvironmentEmitter((1, 1, 1))],
                               [scenes.slab_camera()])
        scene.extract_mean_surface()
        sphere_field.mark_updated()

        with scene.frozen_mean_surface():
            render_primal(scene, scene.cameras[0], path_cfg)
        with pytest.raises(StaleMeanSurfaceError):
            scene.check_fresh()

    def test_intersect_prefers_nearest(self, sphere_field):
        """Test static vs mean-surface hit selection."""
        wall = (box_mesh((-3, -3, 2.0), (3, 3, 2.5)), Material(DiffuseBsdf()))
        scene = Scene.assemble([wall], sphere_field, BLACK)
        scene.extract_mean_surface()
        o = np.array([[0.05, 0.03, -3.0], [2.0, 2.0, -3.0], [2.0, 2.0, 3.0]])
        d = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        hits = scene.intersect(o, d, 0.0)

        assert hits.material.tolist() == [MEAN_SURFACE, 0, NO_HIT]
        assert hits.on_mean.tolist() == [True, False, False]
        assert hits.t[0] == pytest.approx(2.5, abs=0.02)

    def test_emission_one_sided(self):
        """Test that rectangle emitters only emit from their front."""
        light = RectangleEmitter((-1, -1, 0), (2, 0, 0), (0, 2, 0), (4.0, 4.0, 4.0))
        scene = Scene.assemble([], None, BLACK, [light])
        o = np.array([[0.1, 0.2, 1.0], [0.1, 0.2, -1.0]])
        d = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]])
        hits = scene.intersect(o, d, 0.0)

        np.testing.assert_array_equal(scene.emitted(hits, d), [[4.0, 4.0, 4.0], [0.0, 0.0, 0.0]])

    def test_load_scene(self, tmp_path):
        """Test building a scene from JSON with an OBJ mesh and a ground truth."""
        export_obj(box_mesh((-2, -1.2, -2), (2, -1.0, 2)), tmp_path / "floor.obj")
        export_obj(box_mesh((-0.3, -0.3, -0.3), (0.3, 0.3, 0.3)), tmp_path / "gt.obj")
        (tmp_path / "scene.json").write_text(json.dumps({
            "meshes": [{"path": "floor.obj", "bsdf": {"albedo": [0.3, 0.3, 0.3]}}],
            "ground_truth": {"path": "gt.obj"},
            "emitters": [
                {"kind": "environment", "radiance": [1, 1, 1]},
                {"kind": "rectangle", "radiance": [5, 5, 5],
                 "corner": [-0.5, 2, -0.5], "edge_u": [1, 0, 0], "edge_v": [0, 0, 1]},
            ],
            "cameras": [{"position": [0, 0, 3], "target": [0, 0, 0], "width": 8, "height": 6}],
            "field": {"resolution": [8, 8, 8]},
            "albedo": {"resolution": [4, 4, 4]},
            "many_worlds_bsdf": {"use_albedo_grid": True},
        }))

        scene = load_scene(tmp_path / "scene.json")
        reference = load_scene(tmp_path / "scene.json", include_ground_truth=True, include_field=False)

        assert scene.field is not None and scene.field.parameters.shape == (8, 8, 8)
        assert scene.albedo_grid is not None
        assert len(scene.materials) == 2  # floor + light
        assert reference.field is None
        assert len(reference.materials) == 3  # floor + ground truth + light
        assert scene.cameras[0].resolution == (8, 6)

    def test_field_defaults_fill_unset_entries(self, tmp_path):
        """Test that the configured field layout applies where the scene is silent."""
        export_obj(box_mesh((-2, -1.2, -2), (2, -1.0, 2)), tmp_path / "floor.obj")
        (tmp_path / "scene.json").write_text(json.dumps({
            "meshes": [{"path": "floor.obj"}],
            "emitters": [{"kind": "environment", "radiance": [1, 1, 1]}],
            "cameras": [{"position": [0, 0, 3], "target": [0, 0, 0], "width": 4, "height": 4}],
            "field": {"facing": "along_ray"},
        }))
        defaults = FieldConfig(resolution=(6, 6, 6), bounds=((-2.0,) * 3, (2.0,) * 3), init_mu_sigmas=3.0)

        scene = load_scene(tmp_path / "scene.json", field_defaults=defaults)
        plain = load_scene(tmp_path / "scene.json")

        assert scene.field.parameters.shape == (6, 6, 6)
        np.testing.assert_allclose(scene.field.bounds.lo, [-2.0, -2.0, -2.0])
        np.testing.assert_allclose(scene.field.parameters, 3.0 * scene.field.sigma)
        assert plain.field.parameters.shape == FieldConfig().resolution
        assert scene.field.facing == "along_ray"


# =============================================================================
# Integrator
# =============================================================================

class TestManyWorldsEstimator:
    """Tests for the primal many-worlds estimator."""

    def test_empty_field_matches_surface_render(self, path_cfg):
        """Test that alpha = 0 everywhere reproduces the surface-only render bit for bit."""
        scene = scenes.diffuse_plane_scene(size=8)
        scene.field = scenes.empty_field()
        scene.extract_mean_surface()

        mw = render_primal(scene, scene.cameras[0], path_cfg)
        surface = render_surface(scene, scene.cameras[0], path_cfg)

        np.testing.assert_array_equal(mw.pixels, surface.pixels)

    def test_zero_occupancy_model_matches_surface_render(self):
        """Test the same identity with the analytic model at theta = 0."""
        scene = scenes.slab_scene(theta=0.0)
        cfg = PathConfig(k_max=1, spp=16, seed=9)

        np.testing.assert_array_equal(
            render_primal(scene, scene.cameras[0], cfg).pixels,
            render_surface(scene, scene.cameras[0], cfg).pixels,
        )

    def test_doubling_spp_halves_variance(self):
        """Test the pixel variance over 20 seeds at 64 and 128 samples per pixel."""
        scene = scenes.slab_scene(theta=0.5)
        cam = scene.cameras[0]

        def pixel_variance(spp: int) -> float:
            runs = np.stack([
                render_primal(scene, cam, PathConfig(k_max=1, spp=spp, seed=seed)).pixels[..., 0]
                for seed in range(20)
            ])
            return float(runs.var(axis=0, ddof=1).mean())

        ratio = pixel_variance(64) / pixel_variance(128)

        assert 1.35 < ratio < 2.9

    def test_slab_expectation(self, slab_scene):
        """Test E[L] = 1 - 0.25 theta through the slab."""
        img = render_primal(slab_scene, slab_scene.cameras[0], PathConfig(k_max=1, spp=256, seed=1))

        assert img.pixels.mean() == pytest.approx(0.875, abs=0.02)
        assert np.all(img.pixels <= 1.0)

    @pytest.mark.slow
    def test_opaque_slab_converges(self):
        """Test E[L] = 0.75 at theta = 1 to within 0.005."""
        scene = scenes.slab_scene(theta=1.0)
        img = render_primal(scene, scene.cameras[0], PathConfig(k_max=1, spp=4096, seed=3, tile_size=16))

        assert img.pixels.mean() == pytest.approx(0.75, abs=0.005)

    @pytest.mark.parametrize("workers", [2, 4])
    def test_worker_count_does_not_change_image(self, plane_scene, path_cfg, workers):
        """Test that the image is independent of the thread count."""
        single = render_primal(plane_scene, plane_scene.cameras[0], path_cfg, workers=1)
        multi = render_primal(plane_scene, plane_scene.cameras[0], path_cfg, workers=workers)

        np.testing.assert_array_equal(single.pixels, multi.pixels)

    def test_same_seed_same_image(self, plane_scene, path_cfg):
        """Test reproducibility, and that a new pass id changes the noise."""
        a = render_primal(plane_scene, plane_scene.cameras[0], path_cfg, pass_id=0)
        b = render_primal(plane_scene, plane_scene.cameras[0], path_cfg, pass_id=0)
        c = render_primal(plane_scene, plane_scene.cameras[0], path_cfg, pass_id=1)

        np.testing.assert_array_equal(a.pixels, b.pixels)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_at_most_one_blend_per_sample(self, plane_scene):
        """Test that no path blends more than once."""
        stats = RenderStats()
        render_primal(plane_scene, plane_scene.cameras[0], PathConfig(k_max=3, spp=8, tile_size=16), stats=stats)

        assert stats.max_blends_per_sample <= 1
        assert stats.samples == 8 * 8 * 8
        assert stats.blends > 0

    def test_energy_bound(self, plane_scene):
        """Test that albedo <= 1 under a unit environment never exceeds 1."""
        img = render_primal(plane_scene, plane_scene.cameras[0], PathConfig(k_max=3, spp=8, tile_size=16))

        assert np.all(img.pixels >= 0.0)
        assert np.all(img.pixels <= 1.0 + 1e-12)

    def test_furnace(self):
        """Test a convex gray sphere under a white sky: every hit sample returns the albedo."""
        sphere, material, cam = scenes.furnace_sphere_scene(size=9, albedo=0.5)
        scene = Scene.assemble([(sphere, material)], None, BLACK, [EnvironmentEmitter((1, 1, 1))], [cam])
        img = render_surface(scene, cam, PathConfig(k_max=2, spp=16))

        np.testing.assert_allclose(img.pixels[4, 4], [0.5, 0.5, 0.5], rtol=1e-12)
        np.testing.assert_allclose(img.pixels[0, 0], [1.0, 1.0, 1.0])

    def test_rejects_non_finite_samples(self, plane_scene, path_cfg, monkeypatch):
        """Test that NaN samples are dropped and counted, not averaged."""
        original = PathTracer.radiance

        def poisoned(self, origins, directions, streams):
            L, counts = original(self, origins, directions, streams)
            L[0] = math.nan
            return L, counts

        monkeypatch.setattr(PathTracer, "radiance", poisoned)
        stats = RenderStats()
        img = render_primal(plane_scene, plane_scene.cameras[0], path_cfg, stats=stats)

        assert np.all(np.isfinite(img.pixels))
        assert stats.rejected == len(range(0, 64, path_cfg.tile_size))


class TestSingleRay:
    """Tests for the single-ray interface."""

    def test_li_matches_expectation(self):
        """Test one-ray estimates through the slab take only the two possible values."""
        scene = scenes.slab_scene(theta=0.5)
        ray = Ray((0, 0, 0), (0, 0, 1))
        cfg = PathConfig(k_max=1)
        values = {round(float(li(scene, ray, tile_streams(0, 0, i), cfg)[0]), 12) for i in range(40)}

        assert values == {1.0, 0.5}

    def test_li_k_beyond_depth_is_zero(self):
        """Test that segments past the path depth carry no radiance."""
        scene = scenes.slab_scene(theta=0.5)
        ray = Ray((0, 0, 0), (0, 0, 1))

        np.testing.assert_array_equal(li_k(scene, ray, 0, 3, single_streams(0), k_max=2), np.zeros(3))
        np.testing.assert_array_equal(li_k(scene, ray, 0, 1, single_streams(0), k_max=1), np.zeros(3))

    def test_li_k_without_blend(self):
        """Test that a segment other than the selected one sees the plain background."""
        scene = scenes.slab_scene(theta=0.5)
        ray = Ray((0, 0, 0), (0, 0, 1))

        np.testing.assert_array_equal(li_k(scene, ray, -1, 0, single_streams(0), k_max=1), np.ones(3))
