"""Compiled DTW kernels.

Same recurrences and window semantics as the reference implementation in
``dtw``; rewritten with rolling rows and per-row band bounds so the classify
and tune paths can afford hundreds of thousands of alignments. The test suite
pins these kernels to the reference DP bit for bit, so any change here must
keep exact float behavior (no fastmath, no reassociation).

Cells outside the window band are never written and read back as +inf, which
encodes "unreachable". An unreachable end cell yields +inf; callers turn that
into an error or a flag.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


@njit(cache=True, inline="always")
def _pcost(xv: float, yv: float, pdist: int) -> float:
    d = xv - yv
    if pdist == 0:
        return abs(d)
    return d * d


@njit(cache=True)
def _row_bounds(i: int, n: int, m: int, wtype: int, w: int):
    """Inclusive 0-based column span of admissible cells in row i (endpoint
    exemptions excluded; those are handled explicitly by the DP)."""
    if wtype == 0:
        return 0, m - 1
    if wtype == 1:
        if n == 1:
            return 0, m - 1
        lo = _ceil_div(i * (m - 1) - w * (n - 1), n - 1)
        hi = (i * (m - 1) + w * (n - 1)) // (n - 1)
    else:
        lo1 = _ceil_div(i - w, 2)
        lo2 = (m - 1) - (2 * (n - 1 - i) + w)
        lo = lo1 if lo1 > lo2 else lo2
        hi1 = 2 * i + w
        hi2 = (m - 1) - _ceil_div((n - 1 - i) - w, 2)
        hi = hi1 if hi1 < hi2 else hi2
    if lo < 0:
        lo = 0
    if hi > m - 1:
        hi = m - 1
    return lo, hi


@njit(cache=True)
def _pair(x, y, pattern: int, wtype: int, w: int, pdist: int) -> float:
    n = x.shape[0]
    m = y.shape[0]
    INF = np.inf
    prev = np.full(m, INF)
    curr = np.full(m, INF)
    prev_lo, prev_hi = 0, -1  # span of meaningful entries in prev
    curr_lo, curr_hi = 0, -1

    for i in range(n):
        lo, hi = _row_bounds(i, n, m, wtype, w)
        xi = x[i]

        # Rotate rows: curr becomes prev, the old prev is wiped for reuse.
        tmp = prev
        prev = curr
        curr = tmp
        prev_lo, prev_hi, curr_lo, curr_hi = curr_lo, curr_hi, prev_lo, prev_hi
        for j in range(curr_lo, curr_hi + 1):
            curr[j] = INF

        end_done = False
        if i == 0:
            curr[0] = _pcost(xi, y[0], pdist)
            new_lo = 0
            new_hi = 0
            if m == 1:
                end_done = True
            if pattern != 2 and hi >= 1:
                start = lo if lo > 1 else 1
                for j in range(start, hi + 1):
                    curr[j] = curr[j - 1] + _pcost(xi, y[j], pdist)
                if hi > new_hi:
                    new_hi = hi
                if hi == m - 1:
                    end_done = True
        else:
            new_lo, new_hi = lo, hi
            if hi == m - 1 and lo <= hi:
                end_done = True
            for j in range(lo, hi + 1):
                f = _pcost(xi, y[j], pdist)
                if j == 0:
                    curr[0] = prev[0] + f
                elif pattern == 0:
                    best = prev[j]
                    if prev[j - 1] < best:
                        best = prev[j - 1]
                    if curr[j - 1] < best:
                        best = curr[j - 1]
                    curr[j] = f + best
                elif pattern == 1:
                    best = prev[j] + f
                    cand = prev[j - 1] + 2.0 * f
                    if cand < best:
                        best = cand
                    cand = curr[j - 1] + f
                    if cand < best:
                        best = cand
                    curr[j] = best
                else:
                    best = prev[j]
                    if prev[j - 1] < best:
                        best = prev[j - 1]
                    if j > 1 and prev[j - 2] < best:
                        best = prev[j - 2]
                    curr[j] = f + best

        if i == n - 1 and not end_done:
            # End cell is admissible by exemption even outside the band.
            j = m - 1
            f = _pcost(xi, y[j], pdist)
            if i == 0:
                if pattern != 2 and j >= 1:
                    curr[j] = curr[j - 1] + f
            elif pattern == 0:
                best = prev[j]
                if j >= 1 and prev[j - 1] < best:
                    best = prev[j - 1]
                if j >= 1 and curr[j - 1] < best:
                    best = curr[j - 1]
                curr[j] = f + best
            elif pattern == 1:
                best = prev[j] + f
                if j >= 1:
                    cand = prev[j - 1] + 2.0 * f
                    if cand < best:
                        best = cand
                    cand = curr[j - 1] + f
                    if cand < best:
                        best = cand
                curr[j] = best
            else:
                best = prev[j]
                if j >= 1 and prev[j - 1] < best:
                    best = prev[j - 1]
                if j >= 2 and prev[j - 2] < best:
                    best = prev[j - 2]
                curr[j] = f + best
            if m - 1 > new_hi:
                new_hi = m - 1

        curr_lo, curr_hi = new_lo, new_hi

    return curr[m - 1]


@njit(cache=True, parallel=True)
def _matrix(X, Y, pattern: int, wtype: int, w: int, pdist: int):
    a = X.shape[0]
    b = Y.shape[0]
    out = np.empty((a, b), dtype=np.float64)
    for flat in prange(a * b):
        r = flat // b
        c = flat - r * b
        out[r, c] = _pair(X[r], Y[c], pattern, wtype, w, pdist)
    return out


def dtw_pair(x, y, pattern: int, wtype: int, w: int, pdist: int) -> float:
    return float(_pair(x, y, pattern, wtype, w, pdist))


def dtw_matrix(X, Y, pattern: int, wtype: int, w: int, pdist: int) -> np.ndarray:
    return _matrix(X, Y, pattern, wtype, w, pdist)
