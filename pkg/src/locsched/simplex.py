"""Dense-tableau two-phase simplex for the small LPs used by the solver layer.

Solves  min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0.

Pivoting uses Dantzig's rule until the objective stalls, then switches to
Bland's rule, which cannot cycle, so termination is guaranteed. Problem sizes
here are at most a few thousand variables (occupation measures of belief
MDPs), for which a dense tableau is entirely adequate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LocschedError

EPS = 1e-9


class LpNumericalError(LocschedError):
    pass


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None


def solve_lp(
    c: np.ndarray,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
) -> LpResult:
    c = np.asarray(c, dtype=float)
    n = len(c)
    rows = []
    rhs = []
    senses = []
    if a_eq is not None and len(a_eq):
        for row, b in zip(np.atleast_2d(a_eq), np.atleast_1d(b_eq)):
            rows.append(np.asarray(row, dtype=float))
            rhs.append(float(b))
            senses.append("=")
    if a_ub is not None and len(a_ub):
        for row, b in zip(np.atleast_2d(a_ub), np.atleast_1d(b_ub)):
            rows.append(np.asarray(row, dtype=float))
            rhs.append(float(b))
            senses.append("<")
    m = len(rows)
    if m == 0:
        if (c >= -EPS).all():
            return LpResult("optimal", np.zeros(n), 0.0)
        return LpResult("unbounded")

    # Scale rows to unit max magnitude; improves pivoting on mixed-unit rows.
    a = np.vstack(rows)
    b = np.array(rhs)
    scale = np.maximum(np.abs(a).max(axis=1), np.abs(b))
    scale[scale == 0] = 1.0
    a = a / scale[:, None]
    b = b / scale

    n_slack = sum(1 for s in senses if s == "<")
    total = n + n_slack
    tab = np.zeros((m, total + 1))
    tab[:, :n] = a
    tab[:, -1] = b
    si = n
    for i, s in enumerate(senses):
        if s == "<":
            tab[i, si] = 1.0
            si += 1
    neg = tab[:, -1] < 0
    tab[neg, :] *= -1.0

    # Identify natural basic columns (positive unit slack); others get artificials.
    basis = np.full(m, -1, dtype=int)
    for i in range(m):
        for j in range(n, total):
            col = tab[:, j]
            if abs(col[i] - 1.0) < 1e-12 and np.abs(col).sum() - abs(col[i]) < 1e-12:
                basis[i] = j
                break
    need_art = [i for i in range(m) if basis[i] < 0]
    n_art = len(need_art)
    if n_art:
        art_block = np.zeros((m, n_art))
        for k, i in enumerate(need_art):
            art_block[i, k] = 1.0
            basis[i] = total + k
        tab = np.hstack([tab[:, :-1], art_block, tab[:, -1:]])
    width = tab.shape[1] - 1

    if n_art:
        cost1 = np.zeros(width)
        cost1[total:] = 1.0
        obj = _make_objective_row(tab, basis, cost1)
        _iterate(tab, obj, basis, allowed=width)
        if obj[-1] < -EPS * 10:
            return LpResult("infeasible")
        _evict_artificials(tab, basis, total)

    cost2 = np.zeros(width)
    cost2[:n] = c
    obj = _make_objective_row(tab, basis, cost2)
    status = _iterate(tab, obj, basis, allowed=total)
    if status == "unbounded":
        return LpResult("unbounded")
    x = np.zeros(width)
    x[basis] = tab[:, -1]
    x = x[:n]
    return LpResult("optimal", x, float(c @ x))


def _make_objective_row(tab: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Reduced-cost row with basic columns eliminated; last entry is -objective."""
    obj = np.concatenate([cost, [0.0]])
    for i, j in enumerate(basis):
        if abs(obj[j]) > 0:
            obj = obj - obj[j] * tab[i]
    return obj


def _iterate(tab: np.ndarray, obj: np.ndarray, basis: np.ndarray, allowed: int) -> str:
    """Run simplex pivots in place. Columns >= ``allowed`` never enter."""
    m = len(tab)
    max_iter = 200 * (m + allowed) + 2000
    stall = 0
    bland = False
    for _ in range(max_iter):
        reduced = obj[:allowed]
        if bland:
            candidates = np.flatnonzero(reduced < -EPS)
            if len(candidates) == 0:
                return "optimal"
            enter = int(candidates[0])
        else:
            enter = int(np.argmin(reduced))
            if reduced[enter] >= -EPS:
                return "optimal"
        col = tab[:, enter]
        pos = col > 1e-10
        if not pos.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[pos, -1] / col[pos]
        leave = int(np.argmin(ratios))
        if bland:
            best = ratios[leave]
            tied = np.flatnonzero(np.abs(ratios - best) < 1e-12)
            leave = int(tied[np.argmin(basis[tied])])
        before = obj[-1]
        _pivot(tab, obj, basis, leave, enter)
        if obj[-1] > before + 1e-12:  # -objective grew, i.e. real progress
            stall = 0
        else:
            stall += 1
            if stall > 2 * m + 10:
                bland = True
    raise LpNumericalError("simplex iteration limit exceeded")


def _pivot(tab: np.ndarray, obj: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    obj -= obj[col] * tab[row]
    basis[row] = col


def _evict_artificials(tab: np.ndarray, basis: np.ndarray, total: int) -> None:
    """Pivot zero-level artificials out of the basis where possible."""
    for i in range(len(tab)):
        if basis[i] >= total:
            row = tab[i, :total]
            cands = np.flatnonzero(np.abs(row) > 1e-9)
            if len(cands):
                dummy = np.zeros(tab.shape[1])
                _pivot(tab, dummy, basis, i, int(cands[0]))
