"""Dynamic time warping between sampled delay series.

Three step patterns are supported, written below with 1-based indices and
per-point cost f(i, j):

* symmetric1:  D(i,j) = f(i,j) + min(D(i-1,j), D(i-1,j-1), D(i,j-1))
* symmetric2:  D(i,j) = min(D(i-1,j) + f, D(i-1,j-1) + 2f, D(i,j-1) + f)
* asymmetric:  D(i,j) = f(i,j) + min(D(i-1,j), D(i-1,j-1), D(i-1,j-2))

with D(1,1) = f(1,1) in every pattern and the convention that cells outside
the global window constraint are unreachable. Point costs are L1 or squared
L2 on scalars.

Window constraints are anchored at both corners so the endpoints stay
admissible for any pair of lengths:

* sakoechiba: a band of half-width ``window_size`` around the straight line
  from (1,1) to (n,m), measured in steps of the query index.
* itakura: a slope-constrained parallelogram (slopes between 1/2 and 2 from
  both corners), dilated by ``window_size``. For extreme length ratios the
  corners are kept admissible but no path may connect them, in which case
  :func:`dtw_distance` raises :class:`DtwError`.

``dtw_distance`` and ``dtw_cost_matrix`` run on compiled kernels;
``brute_force_dtw`` enumerates every admissible warping path directly from
the step definitions (exponential, capped at n*m <= 64) and exists so the
kernels can be checked against something that shares none of their code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEP_PATTERNS = ("symmetric1", "symmetric2", "asymmetric")
WINDOW_TYPES = (None, "sakoechiba", "itakura")
POINT_DISTANCES = ("l1", "l2sq")

_PATTERN_CODE = {"symmetric1": 0, "symmetric2": 1, "asymmetric": 2}
_WINDOW_CODE = {None: 0, "sakoechiba": 1, "itakura": 2}
_PDIST_CODE = {"l1": 0, "l2sq": 1}


class DtwError(ValueError):
    """No admissible warping path connects the two series."""


@dataclass
class DtwConfig:
    step_pattern: str = "symmetric1"
    window_type: str | None = None
    window_size: int | None = None
    point_distance: str = "l1"

    def validate(self) -> "DtwConfig":
        if self.step_pattern not in STEP_PATTERNS:
            raise ValueError(
                f"unknown step pattern {self.step_pattern!r}, expected one of {STEP_PATTERNS}"
            )
        if self.window_type not in WINDOW_TYPES:
            raise ValueError(
                f"unknown window type {self.window_type!r}, expected one of "
                f"{tuple(w for w in WINDOW_TYPES if w)} or None"
            )
        if self.point_distance not in POINT_DISTANCES:
            raise ValueError(
                f"unknown point distance {self.point_distance!r}, "
                f"expected one of {POINT_DISTANCES}"
            )
        if self.window_type is not None:
            if self.window_size is None:
                raise ValueError("window_size is required when window_type is set")
            if int(self.window_size) < 0:
                raise ValueError(f"window_size must be >= 0, got {self.window_size}")
        return self


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def window_allows(
    i: int,
    j: int,
    n: int,
    m: int,
    window_type: str | None = None,
    window_size: int | None = None,
) -> bool:
    """Admissibility of cell (i, j), 1-based, for series of lengths n and m.

    Both endpoints (1,1) and (n,m) are admissible for every window type and
    size; admissibility of an endpoint does not by itself guarantee that a
    path through the interior exists.
    """
    if not (1 <= i <= n and 1 <= j <= m):
        raise ValueError(f"cell ({i},{j}) outside a {n}x{m} alignment grid")
    if window_type is None:
        return True
    if window_type not in WINDOW_TYPES:
        raise ValueError(
            f"unknown window type {window_type!r}, expected one of "
            f"{tuple(w for w in WINDOW_TYPES if w)} or None"
        )
    w = int(window_size)
    if (i == 1 and j == 1) or (i == n and j == m):
        return True
    if window_type == "sakoechiba":
        if n == 1:
            return True
        # |(j-1) - (i-1)(m-1)/(n-1)| <= w, kept in exact integer arithmetic.
        return abs((j - 1) * (n - 1) - (i - 1) * (m - 1)) <= w * (n - 1)
    # itakura: slope >= 1/2 and <= 2 out of (1,1) and into (n,m). Each of the
    # four slope bounds is slackened by w bins, which keeps the region
    # invariant under transposing the two series.
    a, b = i - 1, j - 1
    if b > 2 * a + w:
        return False
    if a > 2 * b + w:
        return False
    ra, rb = n - i, m - j
    if rb > 2 * ra + w:
        return False
    if ra > 2 * rb + w:
        return False
    return True


def _point_cost(xv: float, yv: float, point_distance: str) -> float:
    d = xv - yv
    return abs(d) if point_distance == "l1" else d * d


def _as_series(x) -> np.ndarray:
    # TimeSeries duck-typing: anything with .values is unwrapped.
    values = getattr(x, "values", x)
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("dtw operates on nonempty one-dimensional series")
    if not np.all(np.isfinite(arr)):
        raise ValueError("dtw input contains non-finite values")
    return arr


def _no_path_error(n: int, m: int, config: DtwConfig) -> DtwError:
    return DtwError(
        f"no admissible warping path between series of lengths {n} and {m} "
        f"(step_pattern={config.step_pattern}, window_type={config.window_type}, "
        f"window_size={config.window_size})"
    )


def _reference_dtw(x: np.ndarray, y: np.ndarray, config: DtwConfig):
    """Full-matrix dynamic program with path backtracking. Readable, not fast;
    the compiled kernels must match it exactly."""
    n, m = x.size, y.size
    pattern = config.step_pattern
    pd = config.point_distance
    wt, ws = config.window_type, config.window_size

    admissible = np.zeros((n, m), dtype=bool)
    for i in range(n):
        for j in range(m):
            admissible[i, j] = window_allows(i + 1, j + 1, n, m, wt, ws)

    D = np.full((n, m), np.inf)
    D[0, 0] = _point_cost(x[0], y[0], pd)
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            if not admissible[i, j]:
                continue
            f = _point_cost(x[i], y[j], pd)
            if pattern == "symmetric1":
                best = np.inf
                if i > 0:
                    best = min(best, D[i - 1, j], D[i - 1, j - 1] if j > 0 else np.inf)
                if j > 0:
                    best = min(best, D[i, j - 1])
                D[i, j] = f + best
            elif pattern == "symmetric2":
                best = np.inf
                if i > 0:
                    best = min(best, D[i - 1, j] + f)
                    if j > 0:
                        best = min(best, D[i - 1, j - 1] + 2.0 * f)
                if j > 0:
                    best = min(best, D[i, j - 1] + f)
                D[i, j] = best
            else:  # asymmetric
                best = np.inf
                if i > 0:
                    best = min(best, D[i - 1, j])
                    if j > 0:
                        best = min(best, D[i - 1, j - 1])
                    if j > 1:
                        best = min(best, D[i - 1, j - 2])
                D[i, j] = f + best

    cost = float(D[n - 1, m - 1])
    if not np.isfinite(cost):
        raise _no_path_error(n, m, config)

    # Backtrack, preferring the diagonal on ties so paths are deterministic.
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        f = _point_cost(x[i], y[j], pd)
        if config.step_pattern == "symmetric1":
            options = [((i - 1, j - 1), f), ((i - 1, j), f), ((i, j - 1), f)]
        elif config.step_pattern == "symmetric2":
            options = [((i - 1, j - 1), 2.0 * f), ((i - 1, j), f), ((i, j - 1), f)]
        else:
            options = [((i - 1, j - 1), f), ((i - 1, j), f), ((i - 1, j - 2), f)]
        best_prev, best_val = None, np.inf
        for (pi, pj), move_cost in options:
            if pi < 0 or pj < 0:
                continue
            candidate = D[pi, pj] + move_cost
            if candidate < best_val:
                best_prev, best_val = (pi, pj), candidate
        i, j = best_prev
        path.append((i, j))
    path.reverse()
    return cost, path


def dtw_distance(x, y, config: DtwConfig | None = None, return_path: bool = False):
    """Warping cost between two series; optionally also the 0-based path.

    Raises :class:`DtwError` when the window or step pattern leaves the end
    cell unreachable.
    """
    config = (config or DtwConfig()).validate()
    xa, ya = _as_series(x), _as_series(y)
    if return_path:
        cost, path = _reference_dtw(xa, ya, config)
        return cost, path
    from . import _kernels

    cost = _kernels.dtw_pair(
        xa,
        ya,
        _PATTERN_CODE[config.step_pattern],
        _WINDOW_CODE[config.window_type],
        int(config.window_size or 0),
        _PDIST_CODE[config.point_distance],
    )
    if not np.isfinite(cost):
        raise _no_path_error(xa.size, ya.size, config)
    return float(cost)


def dtw_cost_matrix(X, Y, config: DtwConfig | None = None) -> np.ndarray:
    """All-pairs warping costs between the rows of X and the rows of Y.

    Infeasible pairs come back as +inf rather than raising, so callers
    ranking many candidates can decide how to treat them.
    """
    config = (config or DtwConfig()).validate()
    Xa = np.ascontiguousarray(X, dtype=np.float64)
    Ya = np.ascontiguousarray(Y, dtype=np.float64)
    if Xa.ndim != 2 or Ya.ndim != 2:
        raise ValueError("dtw_cost_matrix expects 2-d arrays (series per row)")
    if Xa.shape[1] == 0 or Ya.shape[1] == 0:
        raise ValueError("dtw_cost_matrix series must be nonempty")
    from . import _kernels

    return _kernels.dtw_matrix(
        Xa,
        Ya,
        _PATTERN_CODE[config.step_pattern],
        _WINDOW_CODE[config.window_type],
        int(config.window_size or 0),
        _PDIST_CODE[config.point_distance],
    )


def brute_force_dtw(x, y, config: DtwConfig | None = None) -> float:
    """Minimum cost over every admissible warping path, by direct enumeration.

    This is the executable form of the path definition: walk all move
    sequences from (1,1) to (n,m), sum their costs, take the minimum. It is
    exponential and refuses instances with n*m > 64; its only job is to
    cross-check the dynamic programs on small inputs.
    """
    config = (config or DtwConfig()).validate()
    xa, ya = _as_series(x), _as_series(y)
    n, m = xa.size, ya.size
    if n * m > 64:
        raise ValueError(f"brute force enumeration capped at n*m <= 64, got {n}x{m}")

    admissible = [
        [window_allows(i + 1, j + 1, n, m, config.window_type, config.window_size) for j in range(m)]
        for i in range(n)
    ]
    pd = config.point_distance

    if config.step_pattern == "asymmetric":
        moves = ((1, 0, 1.0), (1, 1, 1.0), (1, 2, 1.0))
    elif config.step_pattern == "symmetric2":
        moves = ((1, 0, 1.0), (0, 1, 1.0), (1, 1, 2.0))
    else:
        moves = ((1, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0))

    best = np.inf

    def walk(i: int, j: int, acc: float) -> None:
        nonlocal best
        if i == n - 1 and j == m - 1:
            if acc < best:
                best = acc
            return
        for di, dj, weight in moves:
            ni, nj = i + di, j + dj
            if ni < n and nj < m and admissible[ni][nj]:
                walk(ni, nj, acc + weight * _point_cost(xa[ni], ya[nj], pd))

    walk(0, 0, _point_cost(xa[0], ya[0], pd))
    if not np.isfinite(best):
        raise _no_path_error(n, m, config)
    return float(best)
