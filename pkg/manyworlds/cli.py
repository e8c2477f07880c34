"""
Command-line driver.

Subcommands:
  refs       synthesize reference images from the ground-truth scene
  render     many-worlds render of one camera
  gradcheck  adjoint vs finite differences on a voxel subset
  optimize   full reconstruction
  extract    marching cubes export of a grid checkpoint
  metrics    IoU of two meshes or PSNR of two images

stdout carries one JSON object per line; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from .config import (
    GradConfig,
    OptConfig,
    PathConfig,
    get_config,
    get_settings,
    resolve_deterministic,
    resolve_workers,
)
from .errors import ManyWorldsError
from .schemas import GradcheckSpec, SceneDescription, load_json_model, load_scene_description

logger = logging.getLogger("manyworlds")


def emit(record: Dict[str, Any]) -> None:
    """One JSON progress line on stdout."""
    clean = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in record.items()}
    sys.stdout.write(json.dumps(clean) + "\n")
    sys.stdout.flush()


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )


def load_environment() -> None:
    from dotenv import load_dotenv

    env_path = Path.cwd() / ".env"
    if env_path.exists():
        load_dotenv(env_path)


def _deterministic(args) -> bool:
    return resolve_deterministic(getattr(args, "deterministic", None))


def _with_field_grid(desc: SceneDescription, grid: Optional[str]) -> SceneDescription:
    if grid is None:
        return desc
    path = Path(grid).resolve()
    if not path.exists():
        raise FileNotFoundError(f"Grid file not found: {grid}")
    return desc.model_copy(update={"field": desc.field.model_copy(update={"grid": str(path)})})


def _path_overrides(cfg: PathConfig, args) -> PathConfig:
    update = {}
    if getattr(args, "spp", None) is not None:
        update["spp"] = args.spp
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    return cfg.model_copy(update=update) if update else cfg


def _grad_overrides(cfg: GradConfig, args) -> GradConfig:
    update = {}
    if getattr(args, "grad_spp", None) is not None:
        update["grad_spp"] = args.grad_spp
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed + 1
    return cfg.model_copy(update=update) if update else cfg


# =============================================================================
# Commands
# =============================================================================

def cmd_refs(args) -> int:
    from .optimize.references import render_references
    from .transport.scene import build_scene

    scene_path = Path(args.scene)
    desc = load_scene_description(scene_path)
    scene = build_scene(
        desc, scene_path.parent, include_ground_truth=True, include_field=False, field_defaults=get_config().field
    )
    cfg = PathConfig(spp=args.spp or 256, seed=args.seed or 0)
    if args.k_max is not None:
        cfg = cfg.model_copy(update={"k_max": args.k_max})
    out_dir = Path(args.out or "refs")
    images = render_references(scene, cfg, out_dir, resolve_workers(args.workers))
    for i in range(len(images)):
        emit({"event": "reference", "camera": i, "pfm": str(out_dir / f"ref_{i:02d}.pfm")})
    emit({"event": "done", "command": "refs", "images": len(images)})
    return 0


def cmd_render(args) -> int:
    from .transport.film import save_image
    from .transport.integrator import RenderStats, render_primal
    from .transport.scene import build_scene

    scene_path = Path(args.scene)
    desc = _with_field_grid(load_scene_description(scene_path), args.grid)
    scene = build_scene(desc, scene_path.parent, field_defaults=get_config().field)
    if not 0 <= args.camera < len(scene.cameras):
        raise ValueError(f"camera index {args.camera} out of range (scene has {len(scene.cameras)})")
    cfg = PathConfig(spp=args.spp or 128, seed=args.seed or 0)
    if args.k_max is not None:
        cfg = cfg.model_copy(update={"k_max": args.k_max})
    stats = RenderStats()
    img = render_primal(
        scene, scene.cameras[args.camera], cfg,
        workers=resolve_workers(args.workers), pass_id=args.camera, stats=stats,
    )
    pfm, png = save_image(img, Path(args.out or "render"))
    emit({
        "event": "done", "command": "render", "pfm": str(pfm), "png": str(png),
        "samples": stats.samples, "rejected": stats.rejected, "max_blends_per_sample": stats.max_blends_per_sample,
    })
    return 0


def _gradcheck_references(spec: GradcheckSpec, desc: SceneDescription, scene, base_dir: Path, workers: int):
    from .optimize.references import render_references
    from .transport.film import Image
    from .transport.integrator import render_primal
    from .transport.scene import build_scene

    if spec.reference == "constant":
        return [Image.constant(c.width, c.height, spec.reference_value) for c in scene.cameras]
    if spec.reference == "self":
        # Same seeds and spp as the primal pass: the adjoint image is exactly zero.
        return [render_primal(scene, c, spec.path, workers=workers, pass_id=i) for i, c in enumerate(scene.cameras)]
    if desc.ground_truth is None:
        raise ManyWorldsError("gradcheck reference 'ground_truth' needs a ground_truth mesh in the scene")
    gt_scene = build_scene(
        desc, base_dir, include_ground_truth=True, include_field=False, field_defaults=get_config().field
    )
    cfg = spec.path.model_copy(update={"spp": spec.reference_spp})
    return render_references(gt_scene, cfg, None, workers)


def cmd_gradcheck(args) -> int:
    from .adjoint.finite_diff import compute_gradient, finite_difference_gradient, flat_index, gradcheck_report
    from .transport.scene import build_scene

    scene_path = Path(args.scene)
    desc = load_scene_description(scene_path)
    spec = load_json_model(GradcheckSpec, args.config)
    spec = spec.model_copy(update={
        "path": _path_overrides(spec.path, args),
        "gradient": _grad_overrides(spec.gradient, args),
    })
    workers = resolve_workers(args.workers)
    deterministic = _deterministic(args)

    scene = build_scene(desc, scene_path.parent, field_defaults=get_config().field)
    refs = _gradcheck_references(spec, desc, scene, scene_path.parent, workers)
    views = list(zip(scene.cameras, refs))

    buf, loss, _ = compute_gradient(
        scene, views, spec.path, spec.gradient, spec.loss, workers=workers, deterministic=deterministic
    )
    emit({"event": "adjoint", "loss": loss, "grad_norm": buf.norm()})

    if spec.target == "mu":
        values, grads, h = scene.field.parameters, buf.d_mu, spec.h_sigmas * scene.field.sigma
    else:
        if buf.d_albedo is None:
            raise ManyWorldsError("gradcheck target 'albedo' needs an albedo grid in the scene")
        values, grads, h = scene.albedo_grid.values, buf.d_albedo, spec.h_sigmas
    flat = [flat_index(values.shape, v) for v in spec.voxels]
    adjoint = grads.reshape(-1)[flat]

    fd, underflow = finite_difference_gradient(
        scene, views, spec.voxels, h, spec.path.spp, spec.path.seed,
        target=spec.target, kind=spec.loss, path_cfg=spec.path, workers=workers,
    )
    report = gradcheck_report(spec.voxels, adjoint, fd, spec.tolerance, spec.top_fraction, underflow)
    out = report.write_csv(args.out or "gradcheck.csv")
    for note in report.notes:
        logger.info(note)
    emit({"event": "done", "command": "gradcheck", "report": str(out), **report.summary()})
    return 0 if report.passed else 1


def cmd_optimize(args) -> int:
    from .optimize.loop import run_optimization, write_report
    from .optimize.references import load_references
    from .geometry.obj import load_obj
    from .transport.scene import build_scene

    scene_path = Path(args.scene)
    desc = load_scene_description(scene_path)
    cfg = load_json_model(OptConfig, args.config, base=get_config().optimizer)
    update: Dict[str, Any] = {
        "path": _path_overrides(cfg.path, args),
        "gradient": _grad_overrides(cfg.gradient, args),
    }
    if args.seed is not None:
        update["seed"] = args.seed
    if args.iterations is not None:
        update["iterations"] = args.iterations
    cfg = OptConfig.model_validate(cfg.model_copy(update=update).model_dump())

    scene = build_scene(desc, scene_path.parent, field_defaults=get_config().field)
    refs = load_references(args.refs_dir, len(scene.cameras))
    run_dir = Path(args.run_dir)

    def progress(event) -> None:
        emit(event.to_dict())

    result = run_optimization(
        scene, refs, cfg,
        run_dir=run_dir,
        workers=resolve_workers(args.workers),
        deterministic=_deterministic(args),
        callbacks=[progress],
    )
    gt_mesh = None
    if desc.ground_truth is not None:
        gt_mesh = load_obj(scene_path.parent / desc.ground_truth.path)
    report = write_report(result, refs, run_dir / "report.md", gt_mesh)
    emit({
        "event": "done", "command": "optimize", "run_dir": str(run_dir), "report": str(report),
        "final_loss": result.losses[-1] if result.losses else None,
    })
    return 0


def cmd_extract(args) -> int:
    from .extraction import export_obj, marching_cubes
    from .fields.checkpoint import load_grid
    from .fields.grid import ScalarGrid

    grid = load_grid(args.grid)
    if grid.channels != 1:
        raise ManyWorldsError(f"{args.grid} has {grid.channels} channels; extraction needs a scalar grid")
    mesh = marching_cubes(ScalarGrid(grid.values, grid.bounds), args.iso)
    out = export_obj(mesh, Path(args.out or "mesh.obj"))
    emit({
        "event": "done", "command": "extract", "obj": str(out),
        "vertices": mesh.n_vertices, "faces": mesh.n_faces, "closed": mesh.is_closed(),
    })
    return 0


def cmd_metrics(args) -> int:
    from .geometry.obj import load_obj
    from .optimize.metrics import image_psnr, mesh_iou
    from .transport.film import read_pfm

    a, b = Path(args.a), Path(args.b)
    kinds = {a.suffix.lower(), b.suffix.lower()}
    if kinds == {".obj"}:
        iou = mesh_iou(load_obj(a), load_obj(b), args.resolution)
        emit({"event": "done", "command": "metrics", "iou": iou, "resolution": args.resolution})
    elif kinds == {".pfm"}:
        psnr = image_psnr(read_pfm(a), read_pfm(b))
        emit({"event": "done", "command": "metrics", "psnr": psnr, "identical": math.isinf(psnr) and psnr > 0})
    else:
        raise ValueError("metrics compares two .obj meshes or two .pfm images")
    return 0


COMMANDS = {
    "refs": cmd_refs,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
    "optimize": cmd_optimize,
    "extract": cmd_extract,
    "metrics": cmd_metrics,
}


# =============================================================================
# Parser
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=None, help="Render threads (default: MW_WORKERS or config)")
    common.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Reduce gradients in fixed tile order (default: MW_DETERMINISTIC or config)",
    )
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(
        prog="manyworlds",
        description="Many-worlds inverse rendering",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run_manyworlds.py refs scene.json --out refs --spp 512
  python run_manyworlds.py render scene.json --grid final.mwgrid --camera 0 --out view0
  python run_manyworlds.py gradcheck scene.json gradcheck.json --out report.csv
  python run_manyworlds.py optimize scene.json refs opt.json runs/sphere
  python run_manyworlds.py extract final.mwgrid --iso 0 --out final.obj
  python run_manyworlds.py metrics final.obj truth.obj
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refs", parents=[common], help="Render reference images")
    p.add_argument("scene")
    p.add_argument("--out", help="Output directory (default: refs)")
    p.add_argument("--spp", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--k-max", type=int, dest="k_max")

    p = sub.add_parser("render", parents=[common], help="Many-worlds render of one camera")
    p.add_argument("scene")
    p.add_argument("--grid", help="mu checkpoint overriding the scene's field")
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--out", help="Output stem (default: render)")
    p.add_argument("--spp", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--k-max", type=int, dest="k_max")

    p = sub.add_parser("gradcheck", parents=[common], help="Adjoint vs finite differences")
    p.add_argument("scene")
    p.add_argument("config", help="Gradcheck JSON")
    p.add_argument("--out", help="CSV report (default: gradcheck.csv)")
    p.add_argument("--spp", type=int)
    p.add_argument("--grad-spp", type=int, dest="grad_spp")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("optimize", parents=[common], help="Reconstruct the field")
    p.add_argument("scene")
    p.add_argument("refs_dir")
    p.add_argument("config", help="Optimizer JSON")
    p.add_argument("run_dir")
    p.add_argument("--spp", type=int)
    p.add_argument("--grad-spp", type=int, dest="grad_spp")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("extract", parents=[common], help="Extract the mean surface of a grid")
    p.add_argument("grid")
    p.add_argument("--iso", type=float, default=0.0)
    p.add_argument("--out", help="OBJ path (default: mesh.obj)")

    p = sub.add_parser("metrics", parents=[common], help="IoU of meshes or PSNR of images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--resolution", type=int, default=64)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_environment()
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or get_settings().log_level)

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    except (ManyWorldsError, FileNotFoundError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly: {e}")
        return 1
