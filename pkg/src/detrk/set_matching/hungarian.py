"""Exact minimum-cost assignment (Kuhn-Munkres with row/column potentials)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AssignmentResult:
    pairs: list[tuple[int, int]]
    total_cost: float
    unmatched_predictions: list[int] = field(default_factory=list)


def _solve_rows(cost: list[list[float]], n: int, m: int) -> list[int]:
    """Assign each of n rows to a distinct column among m >= n; returns row -> column."""
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    owner = [0] * (m + 1)          # owner[j]: 1-based row holding column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = cost[i0 - 1]
            ui = u[i0]
            delta = INF
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = [-1] * n
    for j in range(1, m + 1):
        if owner[j]:
            assign[owner[j] - 1] = j - 1
    return assign


def hungarian_match(cost) -> AssignmentResult:
    """Minimum-total-cost one-to-one matching of rows (predictions) to columns.

    Matches ``min(m, n)`` pairs.  Pairs are listed by ascending row index and
    ``total_cost`` is summed in that order.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.size == 0:
        raise ValueError(f"cost must be a non-empty 2D matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    m, n = C.shape
    if m <= n:
        assign = _solve_rows(C.tolist(), m, n)
        pairs = [(i, j) for i, j in enumerate(assign)]
    else:
        assign = _solve_rows(C.T.tolist(), n, m)
        pairs = sorted((i, j) for j, i in enumerate(assign))
    total = 0.0
    for i, j in pairs:
        total += C[i, j]
    matched = {i for i, _ in pairs}
    return AssignmentResult(pairs, float(total), [i for i in range(m) if i not in matched])
