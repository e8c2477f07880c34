"""Wavefront OBJ reader (positions and faces only)."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from .mesh import TriangleMesh

logger = logging.getLogger(__name__)


def _vertex_index(token: str, n_vertices: int, line_no: int) -> int:
    raw = token.split("/")[0]
    try:
        idx = int(raw)
    except ValueError:
        raise ValueError(f"line {line_no}: bad face index {token!r}") from None
    # OBJ is 1-indexed; negative indices count back from the last vertex.
    idx = idx - 1 if idx > 0 else n_vertices + idx
    if idx < 0 or idx >= n_vertices:
        raise ValueError(f"line {line_no}: face index {token!r} out of range")
    return idx


def load_obj(path: Union[str, Path], material_id: int = 0) -> TriangleMesh:
    """
    Load an OBJ file into a TriangleMesh.

    Polygons with more than three corners are fan-triangulated. Normals,
    texture coordinates, groups and materials are ignored.

    Raises:
        FileNotFoundError: if the file doesn't exist.
        ValueError: on malformed records.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"OBJ file not found: {path}")

    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"line {line_no}: vertex needs 3 coordinates")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise ValueError(f"line {line_no}: face needs at least 3 vertices")
                idx = [_vertex_index(tok, len(vertices), line_no) for tok in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])

    logger.debug(f"Loaded {path.name}: {len(vertices)} vertices, {len(faces)} faces")
    return TriangleMesh.create(
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        material_id,
        name=path.name,
    )
