"""
Finite-difference oracle for the adjoint pass.

Both sides of a central difference render with the same seeds (common random
numbers) while the mean surface stays frozen, so the difference isolates the
dependence of the estimator on one parameter.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import GradConfig, PathConfig
from ..fields.gradients import GradientBuffer
from ..transport.camera import Camera
from ..transport.film import Image
from ..transport.integrator import render_primal
from ..transport.scene import Scene
from .backprop import BackpropStats, backpropagate
from .loss import LossKind, loss_and_adjoint

logger = logging.getLogger(__name__)

Index = Union[int, Tuple[int, ...]]
View = Tuple[Camera, Image]


@dataclass
class FiniteDifference:
    value: float
    loss_plus: float
    loss_minus: float
    underflow: bool = False


def _target_array(scene: Scene, target: str) -> np.ndarray:
    if target == "mu":
        return scene.field.parameters
    if target == "albedo":
        if scene.albedo_grid is None:
            raise ValueError("scene has no albedo grid")
        return scene.albedo_grid.values
    raise ValueError(f"unknown finite-difference target {target!r}")


def flat_index(shape, index: Index) -> int:
    if isinstance(index, (tuple, list)):
        return int(np.ravel_multi_index(tuple(int(i) for i in index), shape))
    index = int(index)
    if not 0 <= index < int(np.prod(shape)):
        raise IndexError(f"index {index} out of range for shape {shape}")
    return index


def views_loss(
    scene: Scene,
    views: Sequence[View],
    cfg: PathConfig,
    kind: LossKind = "l2",
    workers: int = 1,
) -> float:
    """Sum of per-view losses; view i renders with pass id i."""
    total = 0.0
    for i, (camera, ref) in enumerate(views):
        img = render_primal(scene, camera, cfg, workers=workers, pass_id=i)
        total += loss_and_adjoint(img, ref, kind)[0]
    return total


def finite_difference(
    scene: Scene,
    camera: Union[Camera, Sequence[View]],
    ref: Optional[Image],
    index: Index,
    h: float,
    spp: int,
    seed: int,
    *,
    target: str = "mu",
    kind: LossKind = "l2",
    path_cfg: Optional[PathConfig] = None,
    workers: int = 1,
) -> FiniteDifference:
    """
    (L(theta + h) - L(theta - h)) / 2h for one parameter.

    camera may also be a list of (camera, reference) pairs, in which case ref
    is ignored and the loss is summed over the views. The parameter is
    restored to its exact original value afterwards.
    """
    if not h > 0.0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    views = [(camera, ref)] if isinstance(camera, Camera) else list(camera)
    cfg = (path_cfg or PathConfig()).model_copy(update={"spp": spp, "seed": seed})

    values = _target_array(scene, target)
    flat = values.reshape(-1)
    i = flat_index(values.shape, index)
    original = flat[i]
    plus, minus = original + h, original - h
    underflow = plus == original or minus == original or plus == minus

    with scene.frozen_mean_surface():
        try:
            flat[i] = plus
            loss_plus = views_loss(scene, views, cfg, kind, workers)
            flat[i] = minus
            loss_minus = views_loss(scene, views, cfg, kind, workers)
        finally:
            flat[i] = original

    step = plus - minus
    value = (loss_plus - loss_minus) / step if step != 0.0 else 0.0
    if underflow:
        logger.warning(f"Finite difference at {target}[{i}] underflowed (h={h:g})")
    return FiniteDifference(float(value), float(loss_plus), float(loss_minus), bool(underflow))


def finite_difference_gradient(
    scene: Scene,
    views: Sequence[View],
    indices: Sequence[Index],
    h: float,
    spp: int,
    seed: int,
    **kwargs,
) -> Tuple[np.ndarray, List[bool]]:
    """FD values and underflow flags over a list of parameters."""
    out, flags = [], []
    for index in indices:
        fd = finite_difference(scene, views, None, index, h, spp, seed, **kwargs)
        out.append(fd.value)
        flags.append(fd.underflow)
    return np.array(out), flags


def compute_gradient(
    scene: Scene,
    views: Sequence[View],
    path_cfg: PathConfig,
    grad_cfg: GradConfig,
    kind: LossKind = "l2",
    *,
    workers: int = 1,
    deterministic: bool = True,
    pass_offset: int = 0,
    stats: Optional[BackpropStats] = None,
) -> Tuple[GradientBuffer, float, List[Image]]:
    """Render, differentiate the loss and backpropagate every view. Returns (gradient, total loss, images)."""
    buf = GradientBuffer.for_scene(scene)
    total = 0.0
    images = []
    for i, (camera, ref) in enumerate(views):
        pass_id = pass_offset + i
        img = render_primal(scene, camera, path_cfg, workers=workers, pass_id=pass_id)
        loss, adjoint = loss_and_adjoint(img, ref, kind)
        backpropagate(
            scene, camera, adjoint, grad_cfg, buf,
            path_cfg=path_cfg, workers=workers, deterministic=deterministic, pass_id=pass_id, stats=stats,
        )
        total += loss
        images.append(img)
    return buf, total, images


# =============================================================================
# Comparison statistics
# =============================================================================

def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def relative_error(adjoint: float, fd: float) -> float:
    if fd == 0.0:
        return 0.0 if adjoint == 0.0 else float("inf")
    return abs(adjoint - fd) / abs(fd)


@dataclass
class GradcheckRow:
    voxel: Index
    adjoint: float
    fd: float
    relative_error: float
    top: bool = False
    underflow: bool = False


@dataclass
class GradcheckReport:
    rows: List[GradcheckRow]
    tolerance: float
    cosine: float
    max_top_error: float
    passed: bool
    notes: List[str] = dc_field(default_factory=list)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["voxel", "adjoint", "fd", "relative_error", "top", "underflow"])
            for r in self.rows:
                voxel = " ".join(str(i) for i in r.voxel) if isinstance(r.voxel, (tuple, list)) else r.voxel
                writer.writerow([voxel, repr(r.adjoint), repr(r.fd), repr(r.relative_error), int(r.top), int(r.underflow)])
        return path

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "cosine": self.cosine,
            "max_top_relative_error": self.max_top_error,
            "rows": len(self.rows),
            "top_rows": sum(r.top for r in self.rows),
            "underflows": sum(r.underflow for r in self.rows),
        }


def gradcheck_report(
    indices: Sequence[Index],
    adjoint: Sequence[float],
    fd: Sequence[float],
    tolerance: float = 0.02,
    top_fraction: float = 0.1,
    underflow: Optional[Sequence[bool]] = None,
) -> GradcheckReport:
    """
    Compare adjoint and FD values.

    Pass/fail looks only at entries whose |fd| is in the top `top_fraction`
    (at least one entry). An all-zero comparison passes.
    """
    adjoint = np.asarray(adjoint, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    underflow = list(underflow) if underflow is not None else [False] * len(fd)
    notes = []

    mag = np.abs(fd)
    n_top = max(1, int(np.ceil(top_fraction * len(fd)))) if len(fd) else 0
    order = np.argsort(-mag, kind="stable")
    top = np.zeros(len(fd), dtype=bool)
    top[order[:n_top]] = True
    top &= mag > 0.0

    rows = [
        GradcheckRow(idx, float(a), float(f), relative_error(float(a), float(f)), bool(t), bool(u))
        for idx, a, f, t, u in zip(indices, adjoint, fd, top, underflow)
    ]
    errors = [r.relative_error for r in rows if r.top]
    max_top = max(errors) if errors else 0.0
    if not errors:
        if np.any(adjoint):
            notes.append("finite differences are all zero but the adjoint is not")
            max_top = float("inf")
        else:
            notes.append("all gradients are zero")
    if any(underflow):
        notes.append(f"{sum(underflow)} finite difference(s) underflowed")

    return GradcheckReport(
        rows=rows,
        tolerance=tolerance,
        cosine=cosine_similarity(adjoint, fd),
        max_top_error=float(max_top),
        passed=bool(max_top <= tolerance),
        notes=notes,
    )
