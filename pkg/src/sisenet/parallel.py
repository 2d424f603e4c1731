"""Seeded substreams and an order-preserving process map.

Every stochastic task receives its own ``numpy.random.Generator`` derived
from a master seed and the task index, so results never depend on how tasks
are scheduled across workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "SISENET_WORKERS"


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    return max(1, int(value)) if value else 1


def seed_sequence(seed: int | Sequence[int] | np.random.SeedSequence) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, *path: int) -> np.random.SeedSequence:
    """Seed of the task addressed by ``path`` under ``seed``.

    ``child_seed(s, k)`` equals the k-th child of ``SeedSequence(s).spawn``,
    computed directly so it is independent of how many siblings exist.
    """
    ss = seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + tuple(int(p) for p in path))


def substream(seed, *path: int) -> np.random.Generator:
    """Generator seeded by :func:`child_seed`."""
    return np.random.Generator(np.random.PCG64(child_seed(seed, *path)))


def named_seed(master: int, name: str) -> np.random.SeedSequence:
    """Deterministic child seed for a named purpose ("events", "observe", ...)."""
    key = int.from_bytes(name.encode()[:8].ljust(8, b"\0"), "little")
    return np.random.SeedSequence(master, spawn_key=(key,))


def pmap(func: Callable[[T], R], items: Iterable[T], workers: int | None = None, chunksize: int = 1) -> list[R]:
    """``list(map(func, items))`` across ``workers`` processes, order preserved."""
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
