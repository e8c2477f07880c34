"""
Tile scheduling.

Pixels are split into fixed-size tiles and tiles run on a thread pool. The
result handler sees tiles in index order when `ordered` is set, otherwise as
they complete.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Tuple, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


def pixel_tiles(n_pixels: int, tile_size: int) -> List[Tuple[int, int]]:
    """[start, end) pixel ranges."""
    return [(s, min(n_pixels, s + tile_size)) for s in range(0, n_pixels, tile_size)]


def run_tiles(
    work: Callable[[int], T],
    n_tiles: int,
    on_result: Callable[[int, T], None],
    workers: int = 1,
    ordered: bool = True,
) -> None:
    """
    Run work(tile) for every tile and hand each result to on_result.

    Exceptions raised by a tile propagate to the caller.
    """
    if workers <= 1 or n_tiles <= 1:
        for i in range(n_tiles):
            on_result(i, work(i))
        return

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(work, i): i for i in range(n_tiles)}

        if ordered:
            results = {}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
            for i in range(n_tiles):
                on_result(i, results.pop(i))
        else:
            for future in as_completed(futures):
                on_result(futures[future], future.result())

    logger.debug(f"Finished {n_tiles} tiles on {workers} workers")
