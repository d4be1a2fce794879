"""Deterministic chunked map over replicate indices.

Chunks have a fixed size that does not depend on the worker count, and the
results are stitched back together in index order, so the output is
bit-identical for any degree of parallelism.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK_SIZE = 64


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("QDFTLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"QDFTLAB_THREADS must be an integer, got {env!r}") from None
    return min(8, os.cpu_count() or 1)


def map_chunks(fn: Callable[[np.ndarray], dict], count: int, *,
               threads: int | None = None, chunk_size: int = CHUNK_SIZE) -> dict:
    """Apply ``fn`` to consecutive index chunks and concatenate along axis 0.

    ``fn`` receives an integer array of replicate indices and returns a
    dict of arrays whose first axis runs over those indices.
    """
    chunks = [np.arange(s, min(s + chunk_size, count)) for s in range(0, count, chunk_size)]
    if not chunks:
        return {}
    workers = thread_count(threads)
    if workers == 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, chunks))
    return {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}
