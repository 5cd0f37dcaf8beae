"""Counter-based random streams and block-parallel Monte Carlo plumbing.

Every Monte Carlo sample index belongs to a fixed block of ``BLOCK``
consecutive indices.  Block ``b`` of a run keyed by ``seed`` always draws
from ``default_rng(SeedSequence(seed, spawn_key=(*key, b)))``, so the
numbers a sample sees depend only on (seed, key, index) and never on how
blocks are scheduled across workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 1 << 14

WORKERS_ENV = "SHEARMIX_WORKERS"


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return n


def stream(seed, *key):
    """Generator for the sub-stream identified by ``key`` under master ``seed``."""
    if seed is None:
        raise ValueError("a master seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def blocks(total, block=BLOCK):
    """(block_index, size) pairs covering ``total`` samples."""
    out = []
    start = 0
    b = 0
    while start < total:
        size = min(block, total - start)
        out.append((b, size))
        start += size
        b += 1
    return out


def parallel_map(fn, items, workers=None):
    """Ordered map, optionally threaded.  Results come back in input order."""
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
