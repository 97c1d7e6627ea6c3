"""Dense two-phase primal simplex.

Solves min/max cᵀx subject to row constraints with senses <, =, > and x ≥ 0.
Bounded variables are modeled by explicit rows by the callers. Dantzig pricing
with a switch to Bland's rule after a run of degenerate pivots, which
guarantees termination.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_EPS = 1e-9


@dataclass(frozen=True)
class LPResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float | None


@njit(cache=True)
def _iterate(T, basis, enter_limit, max_iter, eps):
    """Pivot until optimal. Returns (status, iterations).

    status: 0 optimal, 1 unbounded, 2 iteration limit.
    Columns >= enter_limit (artificials in phase 2) may not enter the basis.
    """
    m = T.shape[0] - 1
    ncol = T.shape[1]
    rhs = ncol - 1
    bland = False
    degen = 0
    it = 0
    while it < max_iter:
        it += 1
        col = -1
        if bland:
            for j in range(enter_limit):
                if T[m, j] < -eps:
                    col = j
                    break
        else:
            best = -eps
            for j in range(enter_limit):
                v = T[m, j]
                if v < best:
                    best = v
                    col = j
        if col < 0:
            return 0, it
        row = -1
        best_ratio = np.inf
        for i in range(m):
            a = T[i, col]
            if a > eps:
                ratio = T[i, rhs] / a
                if ratio < best_ratio - 1e-12:
                    best_ratio = ratio
                    row = i
                elif ratio < best_ratio + 1e-12 and row >= 0 and basis[i] < basis[row]:
                    row = i  # tie: smallest basis index, keeps cycling rare
        if row < 0:
            # No admissible pivot. A reduced cost at the tableau's noise
            # floor does not certify an unbounded ray; zero it and move on
            # rather than misreport a bounded problem.
            tabmax = 0.0
            for i in range(m):
                for j in range(rhs):
                    a = abs(T[i, j])
                    if a > tabmax:
                        tabmax = a
            if abs(T[m, col]) <= eps * (1.0 + tabmax):
                T[m, col] = 0.0
                continue
            return 1, it
        if best_ratio < 1e-11:
            degen += 1
            if degen > 50:
                bland = True
        else:
            degen = 0
            bland = False
        piv = T[row, col]
        for j in range(ncol):
            T[row, j] /= piv
        T[row, col] = 1.0
        for i in range(m + 1):
            if i == row:
                continue
            f = T[i, col]
            if f != 0.0:
                for j in range(ncol):
                    T[i, j] -= f * T[row, j]
                T[i, col] = 0.0
        basis[row] = col
    return 2, it


def solve_lp(c, A, b, senses, maximize: bool = False, max_iter: int | None = None) -> LPResult:
    """Two-phase simplex over rows A x {<,=,>} b with x >= 0.

    senses is a string or sequence over {'<', '=', '>'} per row.
    """
    c = np.asarray(c, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape != (b.size, c.size):
        raise ValueError(f"shape mismatch: A{A.shape}, b{b.shape}, c{c.shape}")
    senses = list(senses)
    if len(senses) != b.size:
        raise ValueError("one sense per row required")
    m, n = A.shape
    obj = -c if maximize else c.copy()

    # normalize to non-negative rhs; a '>' row with zero rhs flips to '<'
    # so its slack can start basic instead of wasting an artificial
    A = A.copy()
    b = b.copy()
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] = -b[i]
            senses[i] = {"<": ">", ">": "<", "=": "="}[senses[i]]
        elif b[i] == 0.0 and senses[i] == ">":
            A[i] *= -1.0
            senses[i] = "<"

    n_slack = sum(1 for s in senses if s in "<>")
    art_rows = [i for i, s in enumerate(senses) if s in ">="]
    n_art = len(art_rows)
    ntot = n + n_slack + n_art
    T = np.zeros((m + 1, ntot + 1), dtype=np.float64)
    T[:m, :n] = A
    T[:m, ntot] = b
    basis = np.empty(m, dtype=np.int64)

    js = n
    ja = n + n_slack
    for i, s in enumerate(senses):
        if s == "<":
            T[i, js] = 1.0
            basis[i] = js
            js += 1
        elif s == ">":
            T[i, js] = -1.0
            js += 1
            T[i, ja] = 1.0
            basis[i] = ja
            ja += 1
        else:
            T[i, ja] = 1.0
            basis[i] = ja
            ja += 1

    if max_iter is None:
        max_iter = 200 * (m + ntot) + 2000

    if n_art:
        # phase 1: minimize artificial sum
        T[m, n + n_slack : ntot] = 1.0
        for i in range(m):
            if basis[i] >= n + n_slack:
                T[m, :] -= T[i, :]
        status, _ = _iterate(T, basis, ntot, max_iter, _EPS)
        if status == 2:
            return LPResult("iteration_limit", None, None)
        if status == 1:
            # the artificial sum is bounded below by zero, so this can only
            # be numerical collapse
            raise ArithmeticError("phase one reported an unbounded ray")
        feas_tol = 1e-7 * (1.0 + float(np.abs(b).max(initial=0.0)))
        if -T[m, ntot] > feas_tol:
            return LPResult("infeasible", None, None)
        # drive leftover artificials out of the basis where possible
        for i in range(m):
            if basis[i] >= n + n_slack:
                for j in range(n + n_slack):
                    if abs(T[i, j]) > 1e-7:
                        piv = T[i, j]
                        T[i, :] /= piv
                        for k in range(m + 1):
                            if k != i and T[k, j] != 0.0:
                                T[k, :] -= T[k, j] * T[i, :]
                        basis[i] = j
                        break
                # else: row is redundant; inert artificial stays at zero

    # phase 2 objective row
    T[m, :] = 0.0
    T[m, :n] = obj
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m, :] -= cb * T[i, :]
    status, _ = _iterate(T, basis, n + n_slack, max_iter, _EPS)
    if status == 1:
        return LPResult("unbounded", None, None)
    if status == 2:
        return LPResult("iteration_limit", None, None)

    x = np.zeros(n, dtype=np.float64)
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, ntot]
    value = -T[m, ntot]
    if maximize:
        value = -value
    return LPResult("optimal", x, float(value))
