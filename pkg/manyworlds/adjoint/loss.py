"""Image losses and their per-pixel adjoints."""
from __future__ import annotations

from typing import Literal, Tuple

import numpy as np

from ..errors import DimensionMismatchError
from ..transport.film import Image

LossKind = Literal["l2", "l1"]


def loss_and_adjoint(img: Image, ref: Image, kind: LossKind = "l2") -> Tuple[float, Image]:
    """
    Mean loss over all pixels and channels, and d loss / d pixel.

    L2: mean (I - R)^2, adjoint 2 (I - R) / N.
    L1: mean |I - R|, adjoint sign(I - R) / N with sign(0) = 0.
    """
    if img.shape != ref.shape:
        raise DimensionMismatchError(f"image {img.shape} vs reference {ref.shape}")
    diff = img.pixels - ref.pixels
    n = diff.size
    if kind == "l2":
        return float(np.sum(diff * diff) / n), Image(2.0 * diff / n)
    if kind == "l1":
        return float(np.sum(np.abs(diff)) / n), Image(np.sign(diff) / n)
    raise ValueError(f"unknown loss kind {kind!r}")
