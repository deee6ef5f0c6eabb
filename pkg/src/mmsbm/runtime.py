"""Worker-count setting and deterministic chunked parallelism.

Batch simulations split work over a fixed number of chunks with generators
spawned deterministically from one seed sequence, so results are
bit-identical no matter how many threads execute the chunks (numpy releases
the GIL on large array ops, so threads give real speedup).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_N_CHUNKS = 8
_threads = 1


def set_threads(n: int):
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def threads_from_env(cli_value=None) -> int:
    """--threads flag wins; falls back to MMSBM_THREADS, then 1."""
    if cli_value is not None:
        return int(cli_value)
    env = os.environ.get("MMSBM_THREADS")
    return int(env) if env else 1


def chunked_map(fn, n_items: int, seed: int):
    """Run fn(start, stop, rng) over fixed chunks; concatenates along axis 0.

    The chunk layout and per-chunk generators depend only on (n_items, seed),
    never on the thread count.
    """
    bounds = np.linspace(0, n_items, min(_N_CHUNKS, n_items) + 1).astype(int)
    streams = np.random.SeedSequence(seed).spawn(len(bounds) - 1)
    jobs = [(int(a), int(b), np.random.default_rng(s))
            for a, b, s in zip(bounds[:-1], bounds[1:], streams) if b > a]
    if _threads <= 1:
        parts = [fn(a, b, rng) for a, b, rng in jobs]
    else:
        with ThreadPoolExecutor(max_workers=_threads) as pool:
            parts = list(pool.map(lambda j: fn(*j), jobs))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)
