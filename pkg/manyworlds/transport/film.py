"""
HDR images and their file formats.

PFM is written little-endian (negative scale) with rows bottom-to-top as the
format requires; PNG previews apply a 1/2.2 tone curve and clamp to 8 bits.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image as PILImage

from ..errors import NonFiniteError

logger = logging.getLogger(__name__)

GAMMA = 2.2


@dataclass
class Image:
    """RGB radiance, pixels shaped (height, width, 3); row 0 is the top."""
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"image must be (height, width, 3), got {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise NonFiniteError("image contains non-finite values")

    @classmethod
    def zeros(cls, width: int, height: int) -> "Image":
        return cls(np.zeros((height, width, 3)))

    @classmethod
    def constant(cls, width: int, height: int, rgb) -> "Image":
        px = np.empty((height, width, 3))
        px[...] = np.asarray(rgb, dtype=np.float64)
        return cls(px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.pixels.shape)


def write_pfm(image: Image, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"PF\n{image.width} {image.height}\n-1.0\n".encode("ascii")
    data = np.flipud(image.pixels).astype("<f4")
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes())
    return path


_PFM_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s", re.DOTALL)


def read_pfm(path: Union[str, Path]) -> Image:
    """
    Read a color (PF) or grayscale (Pf) PFM.

    Raises:
        FileNotFoundError: if the file doesn't exist.
        ValueError: on a malformed header or short data.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"PFM file not found: {path}")
    raw = path.read_bytes()
    m = _PFM_HEADER.match(raw)
    if m is None:
        raise ValueError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    width, height = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    if len(raw) - m.end() < 4 * count:
        raise ValueError(f"{path}: expected {count} floats after header")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=m.end())
    px = np.flipud(data.reshape(height, width, channels)).astype(np.float64)
    if channels == 1:
        px = np.repeat(px, 3, axis=2)
    return Image(px)


def to_srgb8(image: Image) -> np.ndarray:
    mapped = np.clip(image.pixels, 0.0, 1.0) ** (1.0 / GAMMA)
    return np.round(mapped * 255.0).astype(np.uint8)


def write_png(image: Image, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(to_srgb8(image)).save(path)
    return path


def save_image(image: Image, stem: Union[str, Path]) -> Tuple[Path, Path]:
    """Write <stem>.pfm and <stem>.png."""
    stem = Path(stem)
    pfm = write_pfm(image, stem.with_suffix(".pfm"))
    png = write_png(image, stem.with_suffix(".png"))
    logger.debug(f"Saved {pfm.name} and {png.name}")
    return pfm, png
