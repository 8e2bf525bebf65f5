"""Minimum-cost linear assignment (Hungarian / Kuhn-Munkres).

Shortest augmenting path with dual potentials, O(n^2 m) for an ``n x m``
matrix with ``n <= m``. Entries equal to :data:`FORBIDDEN` (``inf``) are never
assigned. Among all assignments the solver returns one that first uses as
many allowed pairs as possible and then has minimum total cost.
"""
from __future__ import annotations

import math

import numpy as np

FORBIDDEN = math.inf


def _solve_wide(a: list[list[float]], n: int, m: int) -> list[int]:
    # potentials/way/p are 1-indexed; index 0 is the virtual root column
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col


def _distinct_row_minima(c: np.ndarray) -> list[int] | None:
    """Row argmins when every row has a strict, finite minimum in its own column.

    Each row then gets its cheapest entry, so the total hits the sum of row
    minima (a lower bound) and no other assignment reaches it.
    """
    if c.shape[1] > 1:
        part = np.partition(c, 1, axis=1)
        if not (part[:, 0] < part[:, 1]).all():
            return None
        best = part[:, 0]
    else:
        best = c[:, 0]
    if not np.isfinite(best).all():
        return None
    cols = c.argmin(axis=1)
    if len(np.unique(cols)) != len(cols):
        return None
    return cols.tolist()


def hungarian(cost) -> list[tuple[int, int]]:
    """Optimal ``(row, col)`` pairs, sorted by row; forbidden pairs omitted.

    Deterministic: rows are augmented in order and ties go to the lowest
    column index.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.size == 0:
        return []
    if np.isnan(c).any():
        raise ValueError("cost matrix contains NaN")
    allowed = np.isfinite(c)
    if not allowed.any():
        return []
    n, m = c.shape
    fast = _distinct_row_minima(c.T if n > m else c)
    if fast is not None:
        pairs = [(j, i) for i, j in enumerate(fast)] if n > m else list(enumerate(fast))
        return sorted(pairs)
    finite = c[allowed]
    lo, hi = float(finite.min()), float(finite.max())
    k = min(n, m)
    # a forbidden pair must cost more than any spread of allowed totals
    big = hi + (k + 1) * (hi - lo + 1.0)
    work = np.where(allowed, c, big)
    transposed = n > m
    if transposed:
        work = work.T
        n, m = m, n
    row_to_col = _solve_wide(work.tolist(), n, m)
    pairs = []
    for r, col in enumerate(row_to_col):
        if col < 0:
            continue
        i, j = (col, r) if transposed else (r, col)
        if allowed[i, j]:
            pairs.append((i, j))
    pairs.sort()
    return pairs


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[i, j] for i, j in pairs))
