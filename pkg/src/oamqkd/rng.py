"""Deterministic RNG streams and a scheduling-independent parallel map.

Every stochastic routine in the package draws from a Generator produced by
`stream(master_seed, *path)`. The path is a tuple of small integers naming
the consumer (module id, cell index, realization index, ...), so any task
can be re-run in isolation and results never depend on worker count or
execution order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Fixed stream-domain ids; keep stable, artifacts depend on them.
DOMAIN_SCREEN = 1
DOMAIN_JITTER = 2
DOMAIN_SWEEP = 3
DOMAIN_BLOCKS = 4
DOMAIN_TRAIN = 5
DOMAIN_SPLIT = 6


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Counter-style independent stream for (master_seed, path).

    Philox is keyed by a SeedSequence spawn key, so streams for distinct
    paths are statistically independent and reproducible on any platform.
    """
    if master_seed < 0:
        raise ValueError(f"master_seed must be >= 0, got {master_seed}")
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def parallel_map(
    fn: Callable[[T], R],
    items: Sequence[T] | Iterable[T],
    workers: int = 1,
) -> list[R]:
    """Order-preserving map; `workers` changes wall time, never results.

    Tasks must be pure given their arguments (each carries its own derived
    RNG stream). Threads suffice: the heavy lifting is numpy/FFT which
    releases the GIL.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
