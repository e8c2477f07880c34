"""Reference images: surface-only renders of the ground-truth scene."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

from ..config import PathConfig
from ..geometry.mesh import TriangleMesh, merge_meshes
from ..transport.bsdf import BLACK
from ..transport.camera import Camera
from ..transport.emitters import Emitter, RectangleEmitter
from ..transport.film import Image, read_pfm, save_image
from ..transport.integrator import render_surface
from ..transport.scene import Material, Scene

logger = logging.getLogger(__name__)


def render_references(
    scene: Scene,
    cfg: PathConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
) -> List[Image]:
    """Render every camera of the scene (pass id = camera index) and optionally write ref_XX.pfm/png."""
    images = []
    for i, camera in enumerate(scene.cameras):
        img = render_surface(scene, camera, cfg, workers=workers, pass_id=i)
        images.append(img)
        if out_dir is not None:
            save_image(img, Path(out_dir) / f"ref_{i:02d}")
        logger.info(f"Reference {i + 1}/{len(scene.cameras)} rendered ({camera.width}x{camera.height}, {cfg.spp} spp)")
    return images


def make_references(
    gt_mesh: TriangleMesh,
    materials: Sequence[Material],
    cameras: Sequence[Camera],
    emitters: Sequence[Emitter],
    spp: int,
    seed: int,
    *,
    k_max: int = 2,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
) -> List[Image]:
    """
    Path trace the ground truth without any many-worlds machinery.

    gt_mesh.material_ids index into materials. Same seed, same images.
    """
    if not cameras:
        raise ValueError("at least one camera is required")
    if gt_mesh.n_faces and int(gt_mesh.material_ids.max()) >= len(materials):
        raise ValueError("ground-truth mesh references an undefined material")
    parts = [gt_mesh]
    mats = list(materials)
    for e in emitters:
        if isinstance(e, RectangleEmitter):
            parts.append(e.mesh(len(mats)))
            mats.append(Material(BLACK, e.radiance))
    scene = Scene(merge_meshes(parts), mats, None, BLACK, emitters, cameras)
    cfg = PathConfig(spp=spp, seed=seed, k_max=k_max)
    return render_references(scene, cfg, out_dir, workers)


def load_references(refs_dir: Union[str, Path], n_views: int) -> List[Image]:
    """Read ref_00.pfm ... for n_views cameras."""
    refs_dir = Path(refs_dir)
    if not refs_dir.is_dir():
        raise FileNotFoundError(f"Reference directory not found: {refs_dir}")
    return [read_pfm(refs_dir / f"ref_{i:02d}.pfm") for i in range(n_views)]
