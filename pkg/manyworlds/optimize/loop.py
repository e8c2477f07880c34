"""
Reconstruction loop.

Every iteration re-extracts the mean surface from the current mu, renders the
selected views, backpropagates their losses into one gradient buffer and
takes an Adam step on mu (and the albedo grid, when the scene has one).
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field as dc_field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from ..adjoint.backprop import BackpropStats, backpropagate
from ..adjoint.loss import loss_and_adjoint
from ..config import OptConfig
from ..errors import DimensionMismatchError, OptimizationDivergedError
from ..extraction import export_obj
from ..fields.checkpoint import save_grid
from ..fields.gradients import GradientBuffer
from ..geometry.mesh import TriangleMesh
from ..transport.film import Image, write_png
from ..transport.integrator import render_primal
from ..transport.scene import Scene
from .adam import AdamState, adam_step
from .metrics import image_psnr, mesh_iou

logger = logging.getLogger(__name__)

LOSS_LOG = "loss.csv"
LOSS_LOG_HEADER = ["iter", "view", "loss", "grad-norm", "seconds"]


@dataclass
class IterationEvent:
    """Progress event handed to registered callbacks."""
    event_type: str  # iteration, checkpoint, status
    iteration: int
    data: Dict[str, Any]
    timestamp: datetime = dc_field(default_factory=datetime.now)

    def to_dict(self) -> Dict[str, Any]:
        return {"event": self.event_type, "iteration": self.iteration, **self.data}


@dataclass
class OptimizationResult:
    field: Any
    mesh: TriangleMesh
    losses: List[float]
    log: List[Dict[str, Any]]
    images: Dict[int, Image]
    iterations: int
    skipped_steps: int = 0
    run_dir: Optional[Path] = None


def _write_log(path: Path, rows: List[Dict[str, Any]], mode: str) -> None:
    """Loss log rows as CSV; mode "w" starts the file with the header."""
    with open(path, mode, newline="") as f:
        writer = csv.writer(f)
        if mode == "w":
            writer.writerow(LOSS_LOG_HEADER)
        for row in rows:
            writer.writerow([row[k] for k in LOSS_LOG_HEADER])


class Reconstruction:
    """
    Drives the descent for one scene and its reference views.

    The scene is modified in place: its field parameters (and albedo grid)
    hold the current estimate at all times.
    """

    def __init__(
        self,
        scene: Scene,
        references: Sequence[Image],
        cfg: OptConfig,
        run_dir: Optional[Union[str, Path]] = None,
        workers: int = 1,
        deterministic: bool = True,
    ):
        if not references:
            raise ValueError("at least one reference view is required")
        if scene.field is None:
            raise ValueError("the scene has no many-worlds field to optimize")
        if len(references) > len(scene.cameras):
            raise ValueError(f"{len(references)} references but only {len(scene.cameras)} camera(s)")
        for i, ref in enumerate(references):
            cam = scene.cameras[i]
            if (ref.width, ref.height) != (cam.width, cam.height):
                raise DimensionMismatchError(
                    f"reference {i} is {ref.width}x{ref.height}, camera is {cam.width}x{cam.height}"
                )
        self.scene = scene
        self.references = list(references)
        self.cfg = cfg
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.workers = workers
        self.deterministic = deterministic
        self.callbacks: List[Callable[[IterationEvent], None]] = []

        self.mu_state = AdamState.zeros_like(scene.field.parameters)
        albedo = scene.albedo_grid if cfg.optimize_albedo else None
        self.albedo = albedo
        self.albedo_state = AdamState.zeros_like(albedo.values) if albedo is not None else None
        self._view_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    def register_callback(self, callback: Callable[[IterationEvent], None]) -> None:
        self.callbacks.append(callback)

    def _emit_event(self, event: IterationEvent) -> None:
        for callback in self.callbacks:
            try:
                callback(event)
            except Exception as e:
                logger.error(f"Progress callback failed: {e}")

    # -------------------------------------------------------------------------

    def _views(self) -> List[int]:
        n = len(self.references)
        if self.cfg.views_per_iteration == "random":
            return [int(self._view_rng.integers(n))]
        return list(range(n))

    def _pass_id(self, iteration: int, view: int) -> int:
        if self.cfg.seed_schedule == "fixed":
            return view
        return iteration * len(self.references) + view

    def _prepare_run_dir(self) -> None:
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "config.json").write_text(self.cfg.model_dump_json(indent=2))
        _write_log(self.run_dir / LOSS_LOG, [], "w")

    def _append_log(self, rows: List[Dict[str, Any]]) -> None:
        if self.run_dir is None:
            return
        _write_log(self.run_dir / LOSS_LOG, rows, "a")

    def _checkpoint(self, iteration: int, images: Dict[int, Image], rows: List[Dict[str, Any]]) -> None:
        if self.run_dir is None:
            return
        out = self.run_dir / f"iter_{iteration:05d}"
        out.mkdir(parents=True, exist_ok=True)
        _write_log(out / LOSS_LOG, rows, "w")
        field = self.scene.field
        save_grid(out / "mu.mwgrid", field.parameters, field.bounds, field.sigma)
        if self.albedo is not None:
            save_grid(out / "albedo.mwgrid", self.albedo.values, self.albedo.bounds)
        for view, img in images.items():
            write_png(img, out / f"view_{view:02d}.png")
        self._emit_event(IterationEvent("checkpoint", iteration, {"path": str(out)}))
        logger.info(f"Checkpoint written to {out}")

    def _check_divergence(self, losses: List[float], strikes: int) -> int:
        if losses[-1] > self.cfg.divergence_factor * losses[0]:
            strikes += 1
        else:
            strikes = 0
        if strikes >= self.cfg.divergence_patience:
            msg = (
                f"loss exceeded {self.cfg.divergence_factor:g}x its initial value {losses[0]:.6g} "
                f"for {strikes} consecutive iterations (last {losses[-1]:.6g})"
            )
            logger.error(f"Optimization diverged: {msg}")
            raise OptimizationDivergedError(msg, losses)
        return strikes

    # -------------------------------------------------------------------------

    def step(self, iteration: int) -> Dict[str, Any]:
        """One descent iteration. Returns its summary."""
        cfg = self.cfg
        scene = self.scene
        field = scene.field
        scene.extract_mean_surface()

        total = GradientBuffer.for_scene(scene)
        stats = BackpropStats()
        rows, images = [], {}
        loss_sum = 0.0
        for view in self._views():
            t0 = time.perf_counter()
            camera = scene.cameras[view]
            pass_id = self._pass_id(iteration, view)
            img = render_primal(scene, camera, cfg.path, workers=self.workers, pass_id=pass_id)
            loss, adjoint = loss_and_adjoint(img, self.references[view], cfg.loss)
            buf = total.like()
            backpropagate(
                scene, camera, adjoint, cfg.gradient, buf,
                path_cfg=cfg.path, workers=self.workers, deterministic=self.deterministic,
                pass_id=pass_id, stats=stats,
            )
            total.add(buf)
            loss_sum += loss
            images[view] = img
            rows.append({
                "iter": iteration,
                "view": view,
                "loss": repr(loss),
                "grad-norm": repr(buf.norm()),
                "seconds": f"{time.perf_counter() - t0:.3f}",
            })

        if cfg.gradient.clip_norm is not None:
            total.clip_norm(cfg.gradient.clip_norm)

        stepped = adam_step(field.parameters, total.d_mu, self.mu_state, cfg, cfg.learning_rate * field.sigma)
        if stepped:
            field.mark_updated()
        if self.albedo is not None and total.d_albedo is not None:
            if adam_step(self.albedo.values, total.d_albedo, self.albedo_state, cfg, cfg.albedo_learning_rate):
                self.albedo.clamp()

        self._append_log(rows)
        return {
            "loss": loss_sum,
            "grad_norm": total.norm(),
            "stepped": stepped,
            "rows": rows,
            "images": images,
            "rejected": stats.rejected,
        }

    def run(self) -> OptimizationResult:
        cfg = self.cfg
        self._prepare_run_dir()
        self._emit_event(IterationEvent("status", 0, {"status": "started", "iterations": cfg.iterations}))

        losses: List[float] = []
        log: List[Dict[str, Any]] = []
        images: Dict[int, Image] = {}
        skipped = 0
        strikes = 0
        for it in range(cfg.iterations):
            t0 = time.perf_counter()
            summary = self.step(it)
            losses.append(summary["loss"])
            log.extend(summary["rows"])
            images.update(summary["images"])
            skipped += 0 if summary["stepped"] else 1

            self._emit_event(IterationEvent("iteration", it, {
                "loss": summary["loss"],
                "grad_norm": summary["grad_norm"],
                "seconds": round(time.perf_counter() - t0, 3),
            }))
            if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                self._checkpoint(it, summary["images"], summary["rows"])
            strikes = self._check_divergence(losses, strikes)

        mesh = self.scene.extract_mean_surface()
        if self.run_dir is not None:
            field = self.scene.field
            export_obj(mesh, self.run_dir / "final.obj")
            save_grid(self.run_dir / "final.mwgrid", field.parameters, field.bounds, field.sigma)
            if self.albedo is not None:
                save_grid(self.run_dir / "final_albedo.mwgrid", self.albedo.values, self.albedo.bounds)

        final = losses[-1] if losses else None
        logger.info(f"Optimization finished: {cfg.iterations} iterations, final loss {final}, {skipped} skipped step(s)")
        self._emit_event(IterationEvent("status", cfg.iterations, {"status": "finished", "final_loss": final}))
        return OptimizationResult(
            field=self.scene.field,
            mesh=mesh,
            losses=losses,
            log=log,
            images=images,
            iterations=cfg.iterations,
            skipped_steps=skipped,
            run_dir=self.run_dir,
        )


def run_optimization(
    scene: Scene,
    references: Sequence[Image],
    cfg: OptConfig,
    *,
    run_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
    deterministic: bool = True,
    callbacks: Sequence[Callable[[IterationEvent], None]] = (),
) -> OptimizationResult:
    """Optimize the scene's field toward the references. See Reconstruction."""
    recon = Reconstruction(scene, references, cfg, run_dir, workers, deterministic)
    for callback in callbacks:
        recon.register_callback(callback)
    return recon.run()


def write_report(
    result: OptimizationResult,
    references: Sequence[Image],
    path: Union[str, Path],
    gt_mesh: Optional[TriangleMesh] = None,
    iou_resolution: int = 64,
) -> Path:
    """Markdown summary of a finished run."""
    path = Path(path)
    date_full = datetime.now().strftime("%B %d, %Y %H:%M")
    lines = [f"# Reconstruction Report: {date_full}", ""]
    lines.append("## Summary")
    lines.append("")
    lines.append(f"- Iterations: {result.iterations}")
    if result.losses:
        lines.append(f"- Initial loss: {result.losses[0]:.6g}")
        lines.append(f"- Final loss: {result.losses[-1]:.6g}")
    lines.append(f"- Skipped steps: {result.skipped_steps}")
    lines.append(f"- Final mesh: {result.mesh.n_vertices} vertices, {result.mesh.n_faces} faces")

    if gt_mesh is not None:
        try:
            iou = mesh_iou(result.mesh, gt_mesh, iou_resolution)
            lines.append(f"- IoU vs ground truth ({iou_resolution}^3): {iou:.4f}")
        except Exception as e:
            logger.warning(f"IoU not computed: {e}")
            lines.append(f"- IoU vs ground truth: not available ({e})")

    if result.images:
        lines += ["", "## Views", "", "| View | PSNR (dB) |", "|------|-----------|"]
        for view in sorted(result.images):
            psnr = image_psnr(result.images[view], references[view])
            lines.append(f"| {view} | {psnr:.2f} |")

    lines += ["", "---", f"*Generated {datetime.now().strftime('%Y-%m-%d')} by manyworlds*", ""]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines))
    logger.info(f"Report saved to {path}")
    return path
