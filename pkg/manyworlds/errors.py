"""
Exception hierarchy for the many-worlds renderer.
"""
from __future__ import annotations

from typing import List, Optional


class ManyWorldsError(Exception):
    """Base class for all renderer errors."""


class SceneError(ManyWorldsError):
    """A scene or config file failed validation.

    ``problems`` holds one ``"json.path: message"`` string per issue.
    """

    def __init__(self, problems: List[str], source: Optional[str] = None):
        self.problems = list(problems)
        self.source = source
        where = f"{source}: " if source else ""
        super().__init__(where + "; ".join(self.problems))


class NonFiniteError(ManyWorldsError, ValueError):
    """NaN or Inf reached an accumulator."""


class DimensionMismatchError(ManyWorldsError, ValueError):
    """Two images or grids that must share a layout do not."""


class StaleMeanSurfaceError(ManyWorldsError):
    """The mean-surface mesh was extracted from an older version of the field."""


class OpenMeshError(ManyWorldsError, ValueError):
    """A closed mesh was required."""


class CheckpointError(ManyWorldsError):
    """A grid checkpoint is malformed."""


class OptimizationDivergedError(ManyWorldsError):
    """The loss stayed far above its initial value for too long."""

    def __init__(self, message: str, losses: List[float]):
        self.losses = list(losses)
        super().__init__(message)
