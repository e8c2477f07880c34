"""
Pydantic schemas for the JSON inputs of the command-line driver.

A scene file names its meshes, materials, emitters, cameras and the
many-worlds field; a gradcheck file names the voxels to compare and the
sampling settings. Validation errors are re-raised as SceneError with one
JSON path per problem.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .config import GradConfig, PathConfig, merge_overrides
from .errors import SceneError

Triple = Tuple[float, float, float]
Model = TypeVar("Model", bound=BaseModel)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================================================================
# Scene description
# =============================================================================

class BsdfSpec(_Strict):
    """Surface material."""

    kind: Literal["diffuse", "mirror"] = Field(
        default="diffuse",
        description="Lambertian or perfect mirror"
    )
    albedo: Triple = Field(
        default=(0.5, 0.5, 0.5),
        description="Constant RGB albedo in [0, 1] (diffuse only)"
    )
    use_albedo_grid: bool = Field(
        default=False,
        description="Read albedo from the scene's albedo grid instead of the constant"
    )

    @model_validator(mode="after")
    def _check_albedo(self) -> "BsdfSpec":
        if any(not 0.0 <= c <= 1.0 for c in self.albedo):
            raise ValueError("albedo channels must lie in [0, 1]")
        return self


class MeshSpec(_Strict):
    """A static OBJ mesh with its material."""

    path: str = Field(description="OBJ file, relative to the scene file")
    bsdf: BsdfSpec = Field(default_factory=BsdfSpec)
    emission: Triple = Field(default=(0.0, 0.0, 0.0), description="Radiance emitted from the front side")


class EmitterSpec(_Strict):
    kind: Literal["environment", "rectangle"]
    radiance: Triple = Field(description="RGB radiance, non-negative")
    corner: Optional[Triple] = None
    edge_u: Optional[Triple] = None
    edge_v: Optional[Triple] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "EmitterSpec":
        if any(c < 0.0 for c in self.radiance):
            raise ValueError("radiance must be non-negative")
        if self.kind == "rectangle" and None in (self.corner, self.edge_u, self.edge_v):
            raise ValueError("rectangle emitters need corner, edge_u and edge_v")
        return self


class CameraSpec(_Strict):
    position: Triple
    target: Triple
    up: Triple = (0.0, 1.0, 0.0)
    fov: float = Field(default=40.0, gt=0.0, lt=180.0, description="Vertical field of view in degrees")
    width: int = Field(default=64, ge=1)
    height: int = Field(default=64, ge=1)


class FieldSpec(_Strict):
    """
    Occupancy grid; either loaded from a checkpoint or initialized constant.

    Unset entries fall back to the `field:` section of the YAML config.
    """

    grid: Optional[str] = Field(default=None, description=".mwgrid checkpoint holding mu")
    resolution: Optional[Tuple[int, int, int]] = None
    bounds: Optional[Tuple[Triple, Triple]] = Field(
        default=None,
        description="World box; defaults to the checkpoint header, else the configured bounds"
    )
    sigma: Optional[float] = Field(default=None, gt=0.0)
    sigma_voxels: Optional[float] = Field(default=None, gt=0.0)
    init_mu_sigmas: Optional[float] = None
    facing: Optional[Literal["opposes_ray", "along_ray"]] = None


class AlbedoSpec(_Strict):
    grid: Optional[str] = Field(default=None, description=".mwgrid checkpoint with 3 channels")
    resolution: Tuple[int, int, int] = (16, 16, 16)
    initial: Triple = (0.5, 0.5, 0.5)


class SceneDescription(_Strict):
    """Root of a scene JSON file."""

    meshes: List[MeshSpec] = Field(default_factory=list, description="Known static geometry")
    ground_truth: Optional[MeshSpec] = Field(
        default=None,
        description="Target shape rendered into the reference images"
    )
    many_worlds_bsdf: BsdfSpec = Field(default_factory=BsdfSpec)
    emitters: List[EmitterSpec] = Field(default_factory=list)
    cameras: List[CameraSpec] = Field(min_length=1)
    field: FieldSpec = Field(default_factory=FieldSpec)
    albedo: Optional[AlbedoSpec] = None
    ray_epsilon: float = Field(default=1e-4, gt=0.0)


# =============================================================================
# Gradient check request
# =============================================================================

class GradcheckSpec(_Strict):
    """Adjoint-vs-finite-difference comparison over a voxel subset."""

    voxels: List[Union[int, Tuple[int, int, int]]] = Field(
        min_length=1,
        description="Flat indices or (i, j, k) triples into the mu grid"
    )
    target: Literal["mu", "albedo"] = "mu"
    h_sigmas: float = Field(default=1e-3, gt=0.0, description="FD step in units of sigma")
    reference: Literal["ground_truth", "self", "constant"] = Field(
        default="ground_truth",
        description="Render the ground truth, the current state, or use reference_value"
    )
    reference_value: Triple = (1.0, 1.0, 1.0)
    reference_spp: int = Field(default=256, ge=1)
    loss: Literal["l2", "l1"] = "l2"
    tolerance: float = Field(default=0.02, gt=0.0)
    top_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    path: PathConfig = Field(default_factory=PathConfig)
    gradient: GradConfig = Field(default_factory=GradConfig)


# =============================================================================
# Parsing helpers
# =============================================================================

def _json_path(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out or "<root>"


def validate_json(model: Type[Model], data: dict, source: Optional[str] = None) -> Model:
    """model_validate with errors converted to SceneError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        problems = [f"{_json_path(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise SceneError(problems, source) from None


def load_json_model(model: Type[Model], path: Union[str, Path], base: Optional[BaseModel] = None) -> Model:
    """Validate a JSON file; with `base`, the file only overrides the keys it names."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SceneError([f"<root>: invalid JSON ({e.msg} at line {e.lineno})"], str(path)) from None
    if base is not None:
        if not isinstance(data, dict):
            raise SceneError(["<root>: expected a JSON object"], str(path))
        data = merge_overrides(base.model_dump(), data)
    return validate_json(model, data, str(path))


def check_files(desc: SceneDescription, base_dir: Path, source: Optional[str] = None) -> None:
    """Report every referenced file that doesn't exist, as JSON paths."""
    problems = []
    for i, mesh in enumerate(desc.meshes):
        if not (base_dir / mesh.path).exists():
            problems.append(f"meshes[{i}].path: file not found: {mesh.path}")
    if desc.ground_truth is not None and not (base_dir / desc.ground_truth.path).exists():
        problems.append(f"ground_truth.path: file not found: {desc.ground_truth.path}")
    if desc.field.grid is not None and not (base_dir / desc.field.grid).exists():
        problems.append(f"field.grid: file not found: {desc.field.grid}")
    if desc.albedo is not None and desc.albedo.grid is not None and not (base_dir / desc.albedo.grid).exists():
        problems.append(f"albedo.grid: file not found: {desc.albedo.grid}")
    if problems:
        raise SceneError(problems, source)


def load_scene_description(path: Union[str, Path]) -> SceneDescription:
    path = Path(path)
    desc = load_json_model(SceneDescription, path)
    check_files(desc, path.parent, str(path))
    return desc
