"""Rectangular minimum-cost assignment by shortest augmenting paths (Hungarian method).

Rows are added one at a time; each addition runs a Dijkstra-like search over
reduced costs ``C[i, j] - u[i] - v[j]`` and augments along the shortest
path. With ``n <= m`` this is ``O(n^2 m)``; the inner column scan is a
numpy vector operation.
"""

from __future__ import annotations

import numpy as np


def solve_min(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assign every row of ``cost`` (``n x m``, ``n <= m``) to a distinct column.

    Returns ``(col_of_row, u, v)`` where ``u``/``v`` are dual potentials with
    ``cost - u[:, None] - v[None, :] >= 0`` (up to rounding), equality on
    assigned pairs and ``v <= 0``, zero on unassigned columns.
    """
    C = np.asarray(cost, dtype=float)
    n, m = C.shape
    if n > m:
        raise ValueError("solve_min needs rows <= columns; transpose first")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: 1-based row matched to column j; 0 = free
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = C[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _fixed_order_total(C: np.ndarray, col_of_row: np.ndarray) -> float:
    return float(sum(C[i, j] for i, j in enumerate(col_of_row)))


def lexicographic_refine(
    cost: np.ndarray, col_of_row: np.ndarray, u: np.ndarray, v: np.ndarray, tol: float
) -> np.ndarray:
    """Among optimal assignments certified by ``(u, v)``, move to the lexicographically smallest.

    Row by row, try to give row ``i`` a smaller column over a tight edge,
    re-routing later rows along tight alternating paths. A rotation is kept
    only if it does not lower the rounded objective.
    """
    C = np.asarray(cost, dtype=float)
    n, m = C.shape
    col = col_of_row.copy()
    row_of = np.full(m, -1, dtype=int)
    row_of[col] = np.arange(n)
    reduced = C - u[:, None] - v[None, :]
    tight = reduced <= tol
    freeable = v >= -tol  # columns allowed to end up unassigned

    for i in range(n):
        c = col[i]
        for j in np.flatnonzero(tight[i, :c]):
            path = _reroute(i, j, c, col, row_of, tight, freeable)
            if path is None:
                continue
            trial_col = col.copy()
            for r, new_c in path:
                trial_col[r] = new_c
            if _fixed_order_total(C, trial_col) > _fixed_order_total(C, col):
                continue
            col = trial_col
            row_of[:] = -1
            row_of[col] = np.arange(n)
            break
    return col


def _reroute(i, j, c, col, row_of, tight, freeable):
    """Moves ``[(row, new_col), ...]`` putting row i on column j, or None.

    Displaced rows (all > i) follow tight edges until they land on column c
    (vacated by i) or on a free column, the latter only if c may go free.
    """
    moves = [(i, j)]
    k = row_of[j]
    if k == -1:
        return moves if freeable[c] else None
    if k < i:
        return None
    n, m = tight.shape
    # BFS over rows; parent[col] = row that moves into col
    parent = {}
    seen_rows = {k}
    queue = [k]
    blocked = set(int(x) for x in col[: i + 1]) | {int(j)}
    blocked.discard(int(c))
    target = None
    while queue and target is None:
        nxt = []
        for r in queue:
            for cc in np.flatnonzero(tight[r]):
                cc = int(cc)
                if cc in blocked or cc in parent or cc == col[r]:
                    continue
                parent[cc] = r
                owner = row_of[cc]
                if cc == c or (owner == -1 and freeable[c]):
                    target = cc
                    break
                if owner == -1 or owner <= i or owner in seen_rows:
                    continue
                seen_rows.add(owner)
                nxt.append(owner)
            if target is not None:
                break
        queue = nxt
    if target is None:
        return None
    cc = target
    while True:
        r = parent[cc]
        moves.append((r, cc))
        if r == k:
            break
        cc = col[r]
    return moves
