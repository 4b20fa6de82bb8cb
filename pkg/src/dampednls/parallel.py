"""Fixed-block dispatch of path ensembles to a process pool.

Paths are cut into blocks of a fixed size independent of the worker count, and
block results come back in block order, so any reduction over them is
bit-identical for 1 or N workers.
"""

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor

DEFAULT_BLOCK = 16


def blocks(n_items, block=DEFAULT_BLOCK):
    return [list(range(lo, min(lo + block, n_items))) for lo in range(0, n_items, block)]


def map_blocks(fn, n_items, *args, workers=1, block=DEFAULT_BLOCK):
    """``[fn(indices, *args) for indices in blocks]`` evaluated on ``workers`` processes."""
    parts = blocks(n_items, block)
    if workers <= 1 or len(parts) <= 1:
        return [fn(p, *args) for p in parts]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        futures = [ex.submit(fn, p, *args) for p in parts]
        return [f.result() for f in futures]
