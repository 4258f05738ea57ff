"""OSPA distance with an exact Hungarian assignment solver."""
from dataclasses import dataclass

import numpy as np

from rnnfilter.lstm import ConfigError, ShapeError


@dataclass(frozen=True)
class OspaConfig:
    p: float = 1.0
    c: float = 100.0

    def __post_init__(self):
        problems = []
        if not self.p >= 1:
            problems.append(("p", f"order must be >= 1, got {self.p!r}"))
        if not self.c > 0:
            problems.append(("c", f"cut-off must be > 0, got {self.c!r}"))
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class OspaResult:
    """``total`` and its localisation / cardinality parts.

    For ``p == 1`` the parts add up to ``total``; otherwise each part is its
    own term raised to ``1/p`` and ``additive`` is False.
    """

    total: float
    loc: float
    card: float
    additive: bool = True


def _square_assignment(cost):
    """Shortest-augmenting-path Hungarian method on an n x n matrix.

    Returns ``(col_of_row, u, v)`` where ``u``/``v`` are optimal dual
    potentials: ``cost[i, j] - u[i] - v[j] >= 0`` with equality on the
    assignment.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)  # p[j]: row (1-based) owning column j
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
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
    col_of_row = np.empty(n, dtype=np.intp)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _augment(tight, match_col, row_of_col, start_row, target_col, blocked_rows, blocked_cols):
    """BFS for an alternating path from an unmatched row to ``target_col``."""
    n = tight.shape[0]
    parent_col = {}
    seen_cols = set()
    frontier = [start_row]
    while frontier:
        nxt = []
        for r in frontier:
            for c in np.flatnonzero(tight[r]):
                c = int(c)
                if c in seen_cols or c in blocked_cols:
                    continue
                seen_cols.add(c)
                parent_col[c] = r
                if c == target_col:
                    # flip the path
                    while True:
                        r = parent_col[c]
                        prev = match_col[r]
                        match_col[r] = c
                        row_of_col[c] = r
                        if r == start_row:
                            return True
                        c = prev
                owner = row_of_col[c]
                if owner >= 0 and owner not in blocked_rows:
                    nxt.append(owner)
        frontier = nxt
    return False


def hungarian(costs):
    """Minimum-cost injection of rows into columns.

    ``costs`` is ``alpha x beta`` with ``alpha <= beta``; returns the column
    index for each row. Among optimal assignments the lexicographically
    smallest is returned.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ShapeError(f"cost matrix must be 2-D, got shape {costs.shape}")
    alpha, beta = costs.shape
    if alpha > beta:
        raise ValueError(f"need rows <= columns, got {alpha} x {beta}; transpose first")
    if alpha == 0:
        return np.zeros(0, dtype=np.intp)
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")
    square = np.zeros((beta, beta))
    square[:alpha] = costs
    col_of_row, u, v = _square_assignment(square)

    reduced = square - u[:, None] - v[None, :]
    tol = 1e-9 * max(1.0, float(np.max(np.abs(square))))
    tight = reduced <= tol
    tight[np.arange(beta), col_of_row] = True

    row_of_col = np.empty(beta, dtype=np.intp)
    row_of_col[col_of_row] = np.arange(beta)
    fixed_rows, fixed_cols = set(), set()
    for i in range(alpha):
        current = int(col_of_row[i])
        for j in np.flatnonzero(tight[i, :current]):
            j = int(j)
            if j in fixed_cols:
                continue
            # try to re-route: i takes j, j's owner must reach i's old column
            trial_match = col_of_row.copy()
            trial_owner = row_of_col.copy()
            owner = int(trial_owner[j])
            trial_match[i] = j
            trial_owner[j] = i
            trial_owner[current] = -1
            trial_match[owner] = -1
            if _augment(tight, trial_match, trial_owner, owner, current,
                        fixed_rows | {i}, fixed_cols | {j}):
                col_of_row, row_of_col = trial_match, trial_owner
                break
        fixed_rows.add(i)
        fixed_cols.add(int(col_of_row[i]))
    return col_of_row[:alpha].copy()


def _as_points(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1 and a.size == 0:
        return a.reshape(0, 0)
    if a.ndim != 2:
        raise ShapeError(f"point set must be an (n, d) matrix, got shape {a.shape}")
    return a


def ospa(A, B, cfg=OspaConfig()):
    A, B = _as_points(A), _as_points(B)
    if len(A) and len(B) and A.shape[1] != B.shape[1]:
        raise ShapeError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if len(A) > len(B):
        A, B = B, A
    alpha, beta = len(A), len(B)
    p, c = cfg.p, cfg.c
    if beta == 0:
        return OspaResult(0.0, 0.0, 0.0, p == 1)
    if alpha == 0:
        return OspaResult(float(c), 0.0, float(c), p == 1)

    diff = A[:, None, :] - B[None, :, :]
    D = np.minimum(c, np.sqrt(np.sum(diff * diff, axis=-1))) ** p
    cols = hungarian(D)
    cost = float(np.sum(D[np.arange(alpha), cols]))
    card_term = c ** p * (beta - alpha)
    total = ((card_term + cost) / beta) ** (1.0 / p)
    if p == 1:
        return OspaResult(total, cost / beta, card_term / beta, True)
    return OspaResult(total, (cost / beta) ** (1.0 / p), (card_term / beta) ** (1.0 / p), False)
