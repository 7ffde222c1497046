"""Deterministic chunked map over environment indices.

Chunk boundaries depend only on ``n`` and ``chunk``, never on the worker
count, and results come back in index order; reductions done afterwards are
therefore bitwise identical for any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 512


def chunks(n, chunk=CHUNK):
    return [np.arange(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def map_chunks(fn, indices, workers=1, chunk=CHUNK):
    """Apply ``fn`` to consecutive slices of ``indices``; list of results in order."""
    indices = np.asarray(indices)
    parts = [indices[c] for c in chunks(indices.size, chunk)]
    if workers is None or workers <= 1 or len(parts) == 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, parts))
