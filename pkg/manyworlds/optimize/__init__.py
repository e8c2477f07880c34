"""Reconstruction: Adam, reference synthesis, metrics and the descent loop."""

from .adam import AdamState, adam_step
from .loop import IterationEvent, OptimizationResult, Reconstruction, run_optimization, write_report
from .metrics import image_psnr, mesh_iou, voxelize
from .references import load_references, make_references, render_references

__all__ = [
    "AdamState",
    "IterationEvent",
    "OptimizationResult",
    "Reconstruction",
    "adam_step",
    "image_psnr",
    "load_references",
    "make_references",
    "mesh_iou",
    "render_references",
    "run_optimization",
    "voxelize",
    "write_report",
]
