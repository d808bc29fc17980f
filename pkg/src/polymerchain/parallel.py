"""Deterministic block-parallel evaluation of per-sample Monte Carlo work.

Samples are cut into fixed blocks whose boundaries do not depend on the number
of workers, and results are concatenated in block order, so the output is
bit-for-bit identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

DEFAULT_BLOCK = 64


def blocks(n_samples: int, block: int = DEFAULT_BLOCK):
    return [(s, min(s + block, n_samples)) for s in range(0, n_samples, block)]


def map_blocks(fn, n_samples: int, workers: int = 1, block: int = DEFAULT_BLOCK):
    """Evaluate ``fn(start, stop)`` on every block and stack the results.

    ``fn`` must be picklable (a module level function or a
    ``functools.partial`` of one) when ``workers > 1``.  Each call returns an
    array whose first axis has length ``stop - start``.
    """
    spans = blocks(n_samples, block)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(spans) <= 1:
        parts = [fn(a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, a, b) for a, b in spans]
            parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)
