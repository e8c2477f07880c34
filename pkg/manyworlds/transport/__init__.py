"""Cameras, emitters, materials, scenes and the many-worlds path tracer."""

from .bsdf import BLACK, DiffuseBsdf, MirrorBsdf, sample_bsdf
from .camera import Camera, generate_ray, generate_rays
from .emitters import EnvironmentEmitter, RectangleEmitter, eval_env
from .film import Image, read_pfm, save_image, write_pfm, write_png
from .integrator import PathTracer, RenderStats, li, li_k, render_primal, render_surface
from .sampling import RngStreams, single_streams, tile_streams
from .scene import Material, Scene, build_scene, load_scene

__all__ = [
    "BLACK",
    "Camera",
    "DiffuseBsdf",
    "EnvironmentEmitter",
    "Image",
    "Material",
    "MirrorBsdf",
    "PathTracer",
    "RectangleEmitter",
    "RenderStats",
    "RngStreams",
    "Scene",
    "build_scene",
    "eval_env",
    "generate_ray",
    "generate_rays",
    "li",
    "li_k",
    "load_scene",
    "read_pfm",
    "render_primal",
    "render_surface",
    "sample_bsdf",
    "save_image",
    "single_streams",
    "tile_streams",
    "write_pfm",
    "write_png",
]
