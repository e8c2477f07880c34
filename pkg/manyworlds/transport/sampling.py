"""
Random streams.

Every unit of work (one tile of one pass) owns two generators spawned from
SeedSequence(seed, spawn_key=(pass_id, tile)). The path stream drives pixel
jitter and mean-surface scattering; the world stream drives every many-worlds
decision. A surface-only render touches the path stream alone, which is what
makes it a per-sample match for a many-worlds render of an empty field.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RngStreams:
    path: np.random.Generator
    world: np.random.Generator


def tile_streams(seed: int, pass_id: int, tile: int) -> RngStreams:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(pass_id), int(tile)))
    path_ss, world_ss = ss.spawn(2)
    return RngStreams(path=np.random.default_rng(path_ss), world=np.random.default_rng(world_ss))


def single_streams(seed: int) -> RngStreams:
    """Streams for one-off single-ray evaluation."""
    return tile_streams(seed, 0, 0)
