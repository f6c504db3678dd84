"""Seeding and replica fan-out helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

_SEED_ENV = "COOPBRANCH_SEED"


def resolve_seed(seed: int | None) -> int:
    """Return ``seed``, falling back to the environment variable, then 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(_SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return 0


def default_threads() -> int:
    return os.cpu_count() or 1


def replica_seeds(seed: int, n: int, tag: int = 0) -> np.ndarray:
    """``n`` distinct 32-bit seeds derived from ``(seed, tag)``.

    numba's generator is seeded from 32 bits, so collisions are resolved
    deterministically by bumping the later duplicate.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag),))
    raw = ss.generate_state(n, dtype=np.uint32).astype(np.int64)
    seen: set[int] = set()
    out = np.empty(n, dtype=np.int64)
    for i, v in enumerate(raw.tolist()):
        while v in seen:
            v = (v + 0x9E3779B1) & 0xFFFFFFFF
        seen.add(v)
        out[i] = v
    return out


def chunked(n: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def pmap(fn: Callable[..., T], items: Sequence, threads: int | None = None) -> list[T]:
    """Order-preserving map over a thread pool.

    The compiled kernels release the GIL, so threads give real parallelism;
    results come back in input order regardless of completion order.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
