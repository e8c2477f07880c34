"""
Binary grid files (.mwgrid).

Layout: a 64-byte little-endian header followed by the values as float64
in C order (x-major, channels last).

    offset  size  field
    0       8     magic b"MWGRID1\\0"
    8       6     resolution nx, ny, nz (uint16)
    14      2     channels (uint16)
    16      24    bounds lo xyz, hi xyz (float32)
    40      8     sigma (float64, 0 when not applicable)
    48      16    reserved

A JSON sidecar (<path>.json) repeats the header for inspection, with the
bounds at full precision. load_grid takes the bounds from the sidecar when it
is present and rounds to the header's float32 values; otherwise the header
wins.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import CheckpointError
from ..geometry.vec import Aabb

logger = logging.getLogger(__name__)

MAGIC = b"MWGRID1\0"
HEADER = struct.Struct("<8s3HH6fd16x")
assert HEADER.size == 64


@dataclass
class GridFile:
    values: np.ndarray  # (nx, ny, nz) or (nx, ny, nz, channels)
    bounds: Aabb
    sigma: float

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 3 else int(self.values.shape[3])


def save_grid(path: Union[str, Path], values: np.ndarray, bounds: Aabb, sigma: Optional[float] = None) -> Path:
    """Write values (3-D, or 4-D with channels last) and its sidecar."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3:
        channels = 1
    elif values.ndim == 4:
        channels = values.shape[3]
    else:
        raise ValueError(f"grid values must be 3-D or 4-D, got shape {values.shape}")
    nx, ny, nz = values.shape[:3]
    if max(nx, ny, nz, channels) > 0xFFFF:
        raise ValueError("grid dimensions exceed the 16-bit header fields")

    header = HEADER.pack(MAGIC, nx, ny, nz, channels, *bounds.lo, *bounds.hi, float(sigma or 0.0))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())

    sidecar = {
        "magic": MAGIC.rstrip(b"\0").decode(),
        "resolution": [nx, ny, nz],
        "channels": channels,
        "bounds": [list(bounds.lo), list(bounds.hi)],
        "sigma": sigma,
        "dtype": "<f8",
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)
    logger.debug(f"Saved grid {path} ({nx}x{ny}x{nz}x{channels})")
    return path


def _sidecar_bounds(path: Path, lo: tuple, hi: tuple) -> Optional[tuple]:
    """Full-precision bounds from the sidecar, if it agrees with the float32 header."""
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        return None
    try:
        exact_lo, exact_hi = json.loads(sidecar.read_text())["bounds"]
        exact = np.asarray([exact_lo, exact_hi], dtype=np.float64)
    except (ValueError, KeyError, TypeError) as e:
        logger.warning(f"{sidecar}: unreadable bounds ({e}); using the header")
        return None
    if exact.shape != (2, 3) or not np.array_equal(exact.astype(np.float32), np.asarray([lo, hi], dtype=np.float32)):
        logger.warning(f"{sidecar}: bounds disagree with the header; using the header")
        return None
    return tuple(exact[0]), tuple(exact[1])


def load_grid(path: Union[str, Path]) -> GridFile:
    """
    Read a grid file.

    Raises:
        FileNotFoundError: if the file doesn't exist.
        CheckpointError: on bad magic or truncated data.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Grid file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise CheckpointError(f"{path}: truncated header ({len(raw)} bytes)")

    magic, nx, ny, nz, channels, *rest = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    lo, hi, sigma = tuple(rest[0:3]), tuple(rest[3:6]), rest[6]
    exact = _sidecar_bounds(path, lo, hi)
    if exact is not None:
        lo, hi = exact

    count = nx * ny * nz * channels
    expected = HEADER.size + 8 * count
    if len(raw) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(raw)}")

    values = np.frombuffer(raw, dtype="<f8", count=count, offset=HEADER.size).astype(np.float64)
    shape = (nx, ny, nz) if channels == 1 else (nx, ny, nz, channels)
    return GridFile(values.reshape(shape), Aabb(lo, hi), float(sigma))
