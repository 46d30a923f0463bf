"""Counter-based random operands and index-ordered parallel maps.

Every random draw is a pure function of (run seed, sample index, stream), so
any split of the index range across workers yields the same numbers.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix(seed: int, index, stream: int = 0):
    """64-bit hash of (seed, sample index, stream)."""
    key = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    key = splitmix64(key ^ np.uint64(stream))
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(key + idx * _GOLDEN)


def uniform(seed: int, start: int, count: int, stream: int = 0) -> np.ndarray:
    """float64 uniforms in [0, 1) for sample indices start..start+count-1."""
    z = mix(seed, np.arange(start, start + count, dtype=np.uint64), stream)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def operand_pairs(seed: int, start: int, count: int, lo: float, hi: float):
    """binary32 operand pairs drawn uniformly from [lo, hi]^2."""
    x = lo + (hi - lo) * uniform(seed, start, count, stream=0)
    y = lo + (hi - lo) * uniform(seed, start, count, stream=1)
    return x.astype(np.float32), y.astype(np.float32)


def chunk_ranges(n: int, chunk: int):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(func, n: int, chunk: int, workers: int = 1, args=()):
    """Apply ``func(lo, hi, *args)`` to fixed index chunks; results in index order.

    The chunk grid depends only on ``n`` and ``chunk``, never on ``workers``.
    """
    ranges = chunk_ranges(n, chunk)
    if workers <= 1 or len(ranges) <= 1:
        return [func(lo, hi, *args) for lo, hi in ranges]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(func, lo, hi, *args) for lo, hi in ranges]
        return [f.result() for f in futures]
