"""Minimum-cost assignment with a deterministic tie-break.

The solver is a shortest-augmenting-path (potentials) method. Among
equally cheap assignments it returns the lexicographically smallest one:
rows are settled in increasing index order and each row takes the lowest
column index that still permits an optimal completion. Totals are always
computed as a flat sum of the selected entries in row order, so equal
assignments compare equal bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import as_array, require_finite

_INF = float("inf")


@dataclass(frozen=True)
class Assignment:
    """(row, col) pairs, sorted by row, covering min(n, m) rows."""

    pairs: tuple[tuple[int, int], ...]
    total: float

    def col_of_row(self) -> dict[int, int]:
        return {i: j for i, j in self.pairs}


def _flat_total(cost: np.ndarray, pairs) -> float:
    total = 0.0
    for i, j in sorted(pairs):
        total += float(cost[i, j])
    return total


def _solve_rows_le_cols(cost: list[list[float]], n: int, m: int) -> list[tuple[int, int]]:
    # Potentials / shortest augmenting path; requires n <= m. 1-based with
    # a virtual column 0, after the classic formulation.
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [_INF] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = _INF
            j1 = -1
            row = cost[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
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
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return [(p[j] - 1, j - 1) for j in range(1, m + 1) if p[j] != 0]


def _optimal_pairs(cost: np.ndarray) -> list[tuple[int, int]]:
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    rows = cost.tolist()
    if n <= m:
        return sorted(_solve_rows_le_cols(rows, n, m))
    transposed = cost.T.tolist()
    return sorted((i, j) for j, i in _solve_rows_le_cols(transposed, m, n))


def _completion(cost: np.ndarray, rows: list[int], cols: list[int]) -> list[tuple[int, int]]:
    if not rows or not cols:
        return []
    sub = cost[np.ix_(rows, cols)]
    return [(rows[i], cols[j]) for i, j in _optimal_pairs(sub)]


def hungarian(cost) -> Assignment:
    """Minimum-total-cost bijection onto min(n, m) rows and columns.

    Ties between optimal assignments break toward the lowest row index,
    then the lowest column index. An empty matrix yields the empty
    assignment with total cost 0.
    """
    cost = as_array(cost)
    if cost.ndim != 2:
        raise DimensionError(f"cost must be a 2-D matrix, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return Assignment((), 0.0)
    require_finite(cost, "cost matrix")

    fixed: list[tuple[int, int]] = []
    rows_left = list(range(n))
    cols_left = list(range(m))
    quota = min(n, m)
    for i in range(n):
        if len(fixed) == quota:
            break
        rows_left.remove(i)
        best_j = -1
        best_total = _INF
        for j in cols_left:
            rest = [c for c in cols_left if c != j]
            candidate = fixed + [(i, j)] + _completion(cost, rows_left, rest)
            total = _flat_total(cost, candidate)
            if total < best_total:
                best_total = total
                best_j = j
        if len(rows_left) >= quota - len(fixed):
            # Skipping this row still leaves enough rows to fill the quota;
            # prefer assigning it unless skipping is strictly cheaper.
            skip_total = _flat_total(cost, fixed + _completion(cost, rows_left, cols_left))
            if skip_total < best_total:
                continue
        fixed.append((i, best_j))
        cols_left.remove(best_j)

    return Assignment(tuple(sorted(fixed)), _flat_total(cost, fixed))
