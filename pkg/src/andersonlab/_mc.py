"""Deterministic per-realization seeds and an order-preserving worker pool."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finaliser; a bijection on 64-bit words
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Seed of realization ``index`` under ``master``.

    ``mix64(mix64(master) + GOLDEN * (index + 1) mod 2^64)`` with the
    splitmix64 finaliser. For a fixed master this is injective in the index
    (for indices below 2^64), and for a fixed index it is injective in the
    master.
    """
    if index < 0:
        raise ValueError("realization index must be nonnegative")
    return _mix64((_mix64(int(master)) + GOLDEN * (int(index) + 1)) & MASK64)


def map_ordered(fn: Callable[[int], T], items: Sequence[int], workers: int = 1) -> list[T]:
    """``[fn(i) for i in items]`` evaluated on up to ``workers`` processes.

    Results come back in input order whatever the schedule, so reductions done
    on the returned list are schedule-independent.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
