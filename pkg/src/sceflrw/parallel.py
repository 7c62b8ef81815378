"""Deterministic fan-out over wavenumber chunks.

Work is split into contiguous chunks whose results are concatenated in index
order, so the output does not depend on the number of threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_DEFAULT_THREADS = None


def set_default_threads(n):
    """Cap used when callers pass ``threads=None`` (``None`` restores the env lookup)."""
    global _DEFAULT_THREADS
    _DEFAULT_THREADS = None if n is None else max(1, int(n))


def resolve_threads(threads=None):
    if threads is not None:
        return max(1, int(threads))
    if _DEFAULT_THREADS is not None:
        return _DEFAULT_THREADS
    env = os.environ.get("SCE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def map_chunks(fn, n_items, threads=None, axis=-1):
    """Apply ``fn(slice)`` to contiguous chunks and stack results along ``axis``.

    ``fn`` may return an array or a tuple of arrays.
    """
    nt = min(resolve_threads(threads), max(1, n_items))
    bounds = np.linspace(0, n_items, nt + 1).astype(int)
    slices = [slice(bounds[i], bounds[i + 1]) for i in range(nt) if bounds[i + 1] > bounds[i]]
    if len(slices) == 1:
        return fn(slices[0])
    with ThreadPoolExecutor(max_workers=len(slices)) as pool:
        parts = list(pool.map(fn, slices))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[j] for p in parts], axis=axis) for j in range(len(parts[0])))
    return np.concatenate(parts, axis=axis)
