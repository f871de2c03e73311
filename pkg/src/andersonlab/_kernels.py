"""Compiled O(N) inertia kernels for d = 1 chains (open or closed into a ring).

The matrix is tridiagonal with ``diag``/``off`` plus an optional symmetric
corner entry ``H[0, N-1] = corner``. Elimination proceeds down the chain and
carries the fill-in of the last column, so the ring costs the same as the
open chain. Pivots smaller than ``pivmin`` are flagged and replaced by
``-pivmin`` so the sweep can finish.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _count_one(diag, off, corner, s, pivmin):
    n = diag.shape[0]  # n >= 3
    tiny = False
    cnt = 0
    last = diag[n - 1] - s
    f = corner
    q = diag[0] - s
    for k in range(n - 2):
        if not abs(q) >= pivmin:
            tiny = True
            q = -pivmin
        if q < 0:
            cnt += 1
        b = off[k]
        last -= f * f / q
        qn = diag[k + 1] - s - b * b / q
        fn = -b * f / q
        if k + 1 == n - 2:
            fn += off[n - 2]
        q = qn
        f = fn
    if not abs(q) >= pivmin:
        tiny = True
        q = -pivmin
    if q < 0:
        cnt += 1
    last -= f * f / q
    if not abs(last) >= pivmin:
        tiny = True
        last = -pivmin
    if last < 0:
        cnt += 1
    return cnt, tiny


@njit(cache=True)
def chain_counts(diag, off, corner, shifts, pivmin):
    """Negative-pivot counts of ``H - s I`` for every ``s`` in ``shifts``."""
    m = shifts.shape[0]
    counts = np.empty(m, dtype=np.int64)
    tiny = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        c, t = _count_one(diag, off, corner, shifts[i], pivmin)
        counts[i] = c
        tiny[i] = t
    return counts, tiny


@njit(cache=True)
def chain_bisect(diag, off, corner, lo, hi, k0, k1, tol, pivmin):
    """Eigenvalues with 0-based ranks ``k0 <= k < k1`` inside the bracket ``[lo, hi]``."""
    out = np.empty(k1 - k0, dtype=np.float64)
    for k in range(k0, k1):
        a = lo
        b = hi
        for _ in range(300):
            if b - a <= tol:
                break
            mid = 0.5 * (a + b)
            c, _t = _count_one(diag, off, corner, mid, pivmin)
            if c > k:
                b = mid
            else:
                a = mid
        out[k - k0] = 0.5 * (a + b)
    return out
