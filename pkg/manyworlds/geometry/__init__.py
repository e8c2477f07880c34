"""Geometry: vectors, rays, triangle meshes, BVH and OBJ input."""

from .bvh import (
    Accelerator,
    aabb_exit_distance,
    aabb_exit_distances,
    build_accelerator,
    intersect,
    intersect_brute_force,
    ray_intersect,
)
from .mesh import TriangleMesh, box_mesh, icosphere, merge_meshes, quad_mesh
from .obj import load_obj
from .vec import Aabb, HitBatch, Intersection, Ray, RayBatch, normalize, reflect

__all__ = [
    "Aabb",
    "Accelerator",
    "HitBatch",
    "Intersection",
    "Ray",
    "RayBatch",
    "TriangleMesh",
    "aabb_exit_distance",
    "aabb_exit_distances",
    "box_mesh",
    "build_accelerator",
    "icosphere",
    "intersect",
    "intersect_brute_force",
    "load_obj",
    "merge_meshes",
    "normalize",
    "quad_mesh",
    "ray_intersect",
    "reflect",
]
