"""Tests for the scene and gradcheck JSON schemas."""
from __future__ import annotations

import json

import pytest
from pydantic import ValidationError

from manyworlds.errors import SceneError
from manyworlds.schemas import (
    BsdfSpec,
    EmitterSpec,
    GradcheckSpec,
    SceneDescription,
    load_json_model,
    load_scene_description,
    validate_json,
)


def minimal_scene() -> dict:
    return {
        "cameras": [{"position": [0, 0, 3], "target": [0, 0, 0], "width": 8, "height": 8}],
        "emitters": [{"kind": "environment", "radiance": [1, 1, 1]}],
    }


class TestSceneDescription:
    """Tests for SceneDescription validation."""

    def test_minimal_scene(self):
        """Test that a camera and an emitter are enough."""
        desc = validate_json(SceneDescription, minimal_scene())

        assert len(desc.cameras) == 1
        assert desc.field.grid is None
        assert desc.many_worlds_bsdf.kind == "diffuse"

    def test_cameras_required(self):
        """Test that a scene without cameras is rejected with its JSON path."""
        data = minimal_scene()
        data["cameras"] = []
        with pytest.raises(SceneError) as exc:
            validate_json(SceneDescription, data, "scene.json")

        assert any(p.startswith("cameras") for p in exc.value.problems)
        assert exc.value.source == "scene.json"

    def test_nested_error_path(self):
        """Test that nested problems report list indices."""
        data = minimal_scene()
        data["cameras"][0]["fov"] = 200.0
        with pytest.raises(SceneError) as exc:
            validate_json(SceneDescription, data)

        assert any(p.startswith("cameras[0].fov") for p in exc.value.problems)

    def test_unknown_key_rejected(self):
        """Test that misspelled keys are errors, not silently ignored."""
        data = minimal_scene()
        data["emiters"] = []
        with pytest.raises(SceneError):
            validate_json(SceneDescription, data)

    def test_invalid_json(self, tmp_path):
        """Test that malformed JSON becomes a SceneError."""
        path = tmp_path / "scene.json"
        path.write_text("{not json")
        with pytest.raises(SceneError) as exc:
            load_json_model(SceneDescription, path)

        assert "invalid JSON" in exc.value.problems[0]

    def test_missing_file(self, tmp_path):
        """Test FileNotFoundError for a missing scene."""
        with pytest.raises(FileNotFoundError):
            load_scene_description(tmp_path / "nope.json")

    def test_missing_referenced_files(self, tmp_path):
        """Test that every missing mesh or grid is listed."""
        data = minimal_scene()
        data["meshes"] = [{"path": "floor.obj"}]
        data["field"] = {"grid": "mu.mwgrid"}
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SceneError) as exc:
            load_scene_description(path)

        assert "meshes[0].path: file not found: floor.obj" in exc.value.problems
        assert "field.grid: file not found: mu.mwgrid" in exc.value.problems


class TestBsdfSpec:
    """Tests for material specs."""

    def test_albedo_range(self):
        """Test albedo channels in [0, 1]."""
        with pytest.raises(ValidationError):
            BsdfSpec(albedo=(1.2, 0.5, 0.5))

    def test_mirror(self):
        """Test the mirror variant."""
        assert BsdfSpec(kind="mirror").kind == "mirror"


class TestEmitterSpec:
    """Tests for emitter specs."""

    def test_rectangle_needs_geometry(self):
        """Test that rectangles need corner and edges."""
        with pytest.raises(ValidationError):
            EmitterSpec(kind="rectangle", radiance=(1.0, 1.0, 1.0))

    def test_negative_radiance(self):
        """Test that radiance must be non-negative."""
        with pytest.raises(ValidationError):
            EmitterSpec(kind="environment", radiance=(-1.0, 0.0, 0.0))


class TestGradcheckSpec:
    """Tests for gradient-check requests."""

    def test_defaults(self):
        """Test default comparison settings."""
        spec = GradcheckSpec(voxels=[0, (1, 2, 3)])

        assert spec.target == "mu"
        assert spec.tolerance == 0.02
        assert spec.voxels[1] == (1, 2, 3)

    def test_voxels_required(self):
        """Test that at least one voxel is needed."""
        with pytest.raises(SceneError):
            validate_json(GradcheckSpec, {"voxels": []})
