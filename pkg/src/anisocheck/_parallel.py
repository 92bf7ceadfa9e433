"""Deterministic chunked parallel map.

Work is cut into chunks of a fixed size that does not depend on the number
of threads.  Chunk ``i`` always gets the ``i``-th child of
``SeedSequence(seed)``, and results come back in chunk order, so a scan is
reproducible for a given seed whatever ``ANISOCHECK_THREADS`` says.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 4096


def thread_count():
    """Worker count from ``ANISOCHECK_THREADS`` (default: CPU count)."""
    raw = os.environ.get("ANISOCHECK_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"ANISOCHECK_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError("ANISOCHECK_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def chunk_sizes(total, chunk=CHUNK):
    full, rest = divmod(int(total), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn, total, seed, chunk=CHUNK, threads=None):
    """Call ``fn(rng, size, index)`` on every chunk; results in chunk order."""
    sizes = chunk_sizes(total, chunk)
    children = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    jobs = [(np.random.default_rng(s), k, i) for i, (s, k) in enumerate(zip(children, sizes))]
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
