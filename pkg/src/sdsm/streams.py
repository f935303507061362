"""Per-replicate random streams and order-preserving parallel execution.

Replicate ``i`` of stream ``s`` under master seed ``seed`` always draws from
``SeedSequence(seed, spawn_key=(s, ..., i))``, so results do not depend on how
replicates are distributed over workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

__all__ = ["replicate_rng", "default_workers", "map_replicates", "WORKERS_ENV"]

WORKERS_ENV = "SDSM_WORKERS"


def replicate_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_chunk(func, seed, key, start, stop, args):
    return [func(replicate_rng(seed, *key, i), i, *args) for i in range(start, stop)]


def map_replicates(func, n, seed, key=(), workers=None, args=(), chunk=None):
    """``[func(rng_i, i, *args) for i in range(n)]`` with private streams, in index order.

    ``func`` must be a module-level function when ``workers > 1``.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    key = tuple(key)
    if workers == 1 or n < 2:
        return _run_chunk(func, seed, key, 0, n, args)
    chunk = chunk or max(1, -(-n // (4 * workers)))
    bounds = [(s, min(n, s + chunk)) for s in range(0, n, chunk)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, func, seed, key, a, b, args) for a, b in bounds]
        for fut in futures:
            out.extend(fut.result())
    return out
