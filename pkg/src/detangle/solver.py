"""Global solver for assembly problems.

Lower bounds come from the Lagrangian dual: the coupling block Bx+Ce+Dy <= f
is moved into the objective with multipliers nu >= 0, which splits the inner
minimization into three trivial subproblems (per-region best link, per-sign
y, per-sign e). Subgradient ascent on nu tightens the bound; branch and bound
with best-bound node selection closes the remaining gap.

Relaxed rows are sup-norm normalized internally (multipliers live in the
scaled space); this is a pure reparametrization of nu and leaves every bound
value unchanged while keeping residuals O(1).
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .model import AssemblyProblem, Solution, evaluate_objective, validate_solution
from .simplex import solve_lp

_BOUND_GUARD = 1e-13  # relative slack subtracted from reported lower bounds


@dataclass
class DualState:
    nu: np.ndarray  # multipliers in scaled-row space
    best_bound: float
    x: np.ndarray
    y: np.ndarray
    e: np.ndarray
    iterations: int
    residual: np.ndarray  # scaled residual at the best iterate
    converged: bool = False  # fixed point reached: iterate feasible, gap zero
    trace: list | None = None


def solve_P1(coeffs, n_regions, n_instances, pins=None):
    """Per-region most-negative link, or no link; pins force/forbid entries."""
    C = coeffs.reshape(n_regions, n_instances)
    x = np.zeros(n_regions * n_instances)
    if n_regions == 0 or n_instances == 0:
        return x
    if pins is None:
        j = np.argmin(C, axis=1)
        rows = np.arange(n_regions)
        neg = C[rows, j] < 0
        x[rows[neg] * n_instances + j[neg]] = 1.0
        return x
    P = pins.reshape(n_regions, n_instances)
    Cm = np.where(P == 0, np.inf, C)
    forced_r, forced_j = np.nonzero(P == 1)
    x[forced_r * n_instances + forced_j] = 1.0
    free = np.ones(n_regions, dtype=bool)
    free[forced_r] = False
    if free.any():
        rows = np.nonzero(free)[0]
        j = np.argmin(Cm[rows], axis=1)
        vals = Cm[rows, j]
        neg = vals < 0
        x[rows[neg] * n_instances + j[neg]] = 1.0
    return x


def solve_P2(coeffs):
    """y_j = 1 iff its coefficient is negative (zero stays 0)."""
    return (np.asarray(coeffs) < 0).astype(float)


def solve_P3(coeffs, M):
    """e_k = M iff its coefficient is negative (zero stays 0)."""
    return np.where(np.asarray(coeffs) < 0, float(M), 0.0)


def _scaled_operators(prob: AssemblyProblem):
    """Row-normalized (B, C, D, f) plus transposes, cached on the problem."""
    cache = getattr(prob, "_ops_cache", None)
    if cache is not None:
        return cache
    B, C, D, f = prob.relaxed_block
    nrows = f.size
    if nrows:
        mx = np.zeros(nrows)
        for mat in (B, C, D):
            if mat.shape[1]:
                a = np.abs(mat)
                rm = a.max(axis=1).toarray().ravel()
                mx = np.maximum(mx, rm)
        mx[mx < 1e-12] = 1.0
        # round norms up to powers of two: scaling stays exact in floats, so
        # integer-data rows keep dyadic residuals and exact fixed points
        mx = np.exp2(np.ceil(np.log2(mx)))
        inv = sparse.diags(1.0 / mx)
        Bs, Cs, Ds = (inv @ B).tocsr(), (inv @ C).tocsr(), (inv @ D).tocsr()
        fs = f / mx
    else:
        Bs, Cs, Ds, fs = B, C, D, f
    ops = (Bs, Cs, Ds, fs, Bs.T.tocsr(), Cs.T.tocsr(), Ds.T.tocsr())
    object.__setattr__(prob, "_ops_cache", ops)
    return ops


def _guarded(value: float, scale: float) -> float:
    """Lower bound minus a float-rounding margin, so it stays a true bound."""
    return value - _BOUND_GUARD * (1.0 + abs(scale))


def dual_ascent(prob: AssemblyProblem, iters: int = 500, step: float = 1e-6,
                schedule: str = "constant", warm=None, pins=None,
                trace: bool = False) -> DualState:
    """Subgradient ascent on the Lagrangian dual; returns the running-max bound.

    nu <- max(0, nu + step_k * residual) with step_k = step (constant) or
    step/sqrt(k) (diminishing). Stops early at a fixed point, where the inner
    iterate is feasible and complementary: the bound is exact there.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if step <= 0:
        raise ValueError("step must be positive")
    if schedule not in ("constant", "diminishing"):
        raise ValueError(f"unknown schedule {schedule!r}")
    Bs, Cs, Ds, fs, BsT, CsT, DsT = _scaled_operators(prob)
    nrows = fs.size
    nu = np.zeros(nrows) if warm is None else np.array(warm, dtype=float)
    if nu.shape != (nrows,) or np.any(nu < 0):
        raise ValueError("warm-start nu has wrong shape or negative entries")
    g, w = prob.g, prob.w
    phi_vec = np.full(prob.n_e, prob.phi)
    best = -np.inf
    best_pack = None
    hist = [] if trace else None
    for k in range(1, iters + 1):
        cx = g + BsT @ nu if nrows else g.copy()
        cy = w + DsT @ nu if nrows else w.copy()
        ce = phi_vec + CsT @ nu if nrows else phi_vec.copy()
        x = solve_P1(cx, prob.n_regions, prob.n_instances, pins)
        y = solve_P2(cy)
        e = solve_P3(ce, prob.M)
        nf = float(nu @ fs) if nrows else 0.0
        val = float(cx @ x + cy @ y + ce @ e) - nf
        scale = float(np.abs(cx) @ x + np.abs(cy) @ y + np.abs(ce) @ e
                      + (np.abs(nu) @ np.abs(fs) if nrows else 0.0))
        bound = _guarded(val, scale)
        residual = (Bs @ x + Cs @ e + Ds @ y - fs) if nrows else np.zeros(0)
        if bound > best:
            best = bound
            best_pack = (x, y, e, residual)
        if hist is not None:
            hist.append(best)
        if nrows == 0:
            return DualState(nu, best, x, y, e, k, residual, converged=True, trace=hist)
        delta = step if schedule == "constant" else step / math.sqrt(k)
        nxt = np.maximum(0.0, nu + delta * residual)
        if np.array_equal(nxt, nu):
            # fixed point: residual <= 0 everywhere and nu_k*residual_k = 0,
            # so the iterate is feasible and the bound equals its objective
            return DualState(nu, best, x, y, e, k, residual, converged=True, trace=hist)
        nu = nxt
    x, y, e, residual = best_pack
    return DualState(nu, best, x, y, e, iters, residual, converged=False, trace=hist)


# --------------------------------------------------------------------------
# LP relaxation (dense simplex bridge)


def lp_relaxation(prob: AssemblyProblem, pins=None):
    """Exact LP optimum with x,y in [0,1], e in [0,M]; returns (value, point)."""
    nx, ny, ne = prob.n_x, prob.n_y, prob.n_e
    nvar = nx + ny + ne
    c = np.concatenate([prob.g, prob.w, np.full(ne, prob.phi)])
    rows = []
    rhs = []
    senses = []

    def add(row, b, s):
        rows.append(row)
        rhs.append(b)
        senses.append(s)

    for i in range(prob.n_regions):
        row = np.zeros(nvar)
        row[i * prob.n_instances : (i + 1) * prob.n_instances] = 1.0
        add(row, 1.0, "<")
    for r in prob.rows:
        row = np.zeros(nvar)
        for i, co in r.x:
            row[i] = co
        for i, co in r.y:
            row[nx + i] = co
        for i, co in r.e:
            row[nx + ny + i] = co
        add(row, r.rhs, "<")
    for j in range(ny):
        row = np.zeros(nvar)
        row[nx + j] = 1.0
        add(row, 1.0, "<")
    for k in range(ne):
        row = np.zeros(nvar)
        row[nx + ny + k] = 1.0
        add(row, prob.M, "<")
    if pins is not None:
        for idx in np.nonzero(pins >= 0)[0]:
            row = np.zeros(nvar)
            row[idx] = 1.0
            add(row, float(pins[idx]), "=")
    res = solve_lp(c, np.array(rows), np.array(rhs), senses)
    if res.status == "infeasible":
        return math.inf, None
    if res.status != "optimal":
        raise RuntimeError(f"LP relaxation failed: {res.status}")
    return res.objective, res.x


# --------------------------------------------------------------------------
# feasibility repair and incumbents


def _derive_slack(prob: AssemblyProblem, x, y):
    """Smallest e meeting every row; None if some e would exceed M."""
    e = np.zeros(prob.n_e)
    for r in prob.rows:
        if not r.e:
            continue
        (k, ce) = r.e[0]
        others = sum(co * x[i] for i, co in r.x) + sum(co * y[i] for i, co in r.y)
        if ce < 0:
            need = (others - r.rhs) / (-ce)
            if need > e[k]:
                e[k] = need
    if np.any(e > prob.M + 1e-9):
        return None
    return np.minimum(e, prob.M)


def repair(prob: AssemblyProblem, x) -> Solution | None:
    """Greedy feasibility repair: drop costliest assignments from violated
    rows, then derive the minimal y and e. Returns a Solution or None.

    Minimal y (columnwise max of x) is optimal for the builder row family:
    w >= 0 and y only tightens rows, so raising y never pays.
    """
    x = (np.asarray(x) > 0.5).astype(float)
    X = x.reshape(prob.n_regions, prob.n_instances)
    G = prob.g.reshape(prob.n_regions, prob.n_instances)
    # at most one assignment per region (keep the cheapest link)
    for i in range(prob.n_regions):
        sel = np.nonzero(X[i])[0]
        if sel.size > 1:
            keep = sel[np.argmin(G[i, sel])]
            X[i] = 0.0
            X[i, keep] = 1.0
    for r in prob.rows:
        if r.e or r.y or not r.x:
            continue  # slack-bearing and coupling rows handled by e/y below
        while sum(co * x[i] for i, co in r.x) > r.rhs + 1e-9:
            active = [i for i, co in r.x if x[i] > 0.5 and co > 0]
            if not active:
                return None
            worst = max(active, key=lambda i: prob.g[i])
            x[worst] = 0.0
    y = X.max(axis=0) if prob.n_y else np.empty(0)
    e = _derive_slack(prob, x, y)
    if e is None:
        return None
    sol = Solution(x=x, y=y, e=e, objective=0.0, bound=-math.inf, is_feasible=True)
    sol.objective = evaluate_objective(prob, sol)
    if validate_solution(prob, sol):
        return None
    return sol


# --------------------------------------------------------------------------
# branch and bound


def _rows_touching(prob: AssemblyProblem):
    touch = getattr(prob, "_touch_cache", None)
    if touch is not None:
        return touch
    touch = [[] for _ in range(prob.n_x)]
    for k, r in enumerate(prob.rows):
        for i, _ in r.x:
            touch[i].append(k)
    object.__setattr__(prob, "_touch_cache", touch)
    return touch


def _child_feasible(prob: AssemblyProblem, pins, idx) -> bool:
    """Cheap infeasibility screen on rows touching the newly pinned index."""
    i_region = idx // prob.n_instances
    row = pins.reshape(prob.n_regions, prob.n_instances)[i_region]
    if np.count_nonzero(row == 1) > 1:
        return False
    for k in _rows_touching(prob)[idx]:
        r = prob.rows[k]
        lo = 0.0
        for i, co in r.x:
            p = pins[i]
            if p == 1:
                lo += co
            elif p == -1 and co < 0:
                lo += co
        for _, co in r.y:
            if co < 0:
                lo += co
        for _, co in r.e:
            if co < 0:
                lo += co * prob.M
        if lo > r.rhs + 1e-9:
            return False
    return True


def _branch_index(prob: AssemblyProblem, state: DualState, pins) -> int | None:
    """x index in the most-violated relaxed row; ties by largest |coef|."""
    order = np.argsort(-state.residual, kind="stable") if state.residual.size else []
    for k in order:
        best, best_co = None, -1.0
        for i, co in prob.rows[k].x:
            if pins[i] == -1 and abs(co) > best_co:
                best, best_co = i, abs(co)
        if best is not None:
            return best
    free = np.nonzero(pins == -1)[0]
    return int(free[0]) if free.size else None


def _try_integral(prob, lpoint, incumbent, repair_fn):
    """Incumbent from an integral LP point; returns (incumbent, closed)."""
    frac = lpoint[: prob.n_x + prob.n_y]
    if not np.all(np.minimum(np.abs(frac), np.abs(frac - 1.0)) < 1e-7):
        return incumbent, False
    cand = repair_fn(lpoint[: prob.n_x])
    if cand is not None and (incumbent is None or cand.objective < incumbent.objective):
        incumbent = cand
    return incumbent, cand is not None


def branch_and_bound(prob: AssemblyProblem, node_budget: int = 100000,
                     tol: float = 1e-6, root_iters: int = 500,
                     node_iters: int = 100, step: float = 1e-6,
                     schedule: str = "constant", lp_assist: str = "auto",
                     time_limit: float | None = None, pins=None) -> Solution:
    """Best-bound branch and bound over pinned x variables.

    Returns a feasible Solution with objective within tol of the global
    optimum (of the subproblem under `pins`, if given), or the best incumbent
    with the residual gap reported when the node budget or time limit runs
    out. Gap 0 is reported only on a completed tree.
    """
    if node_budget < 1:
        raise ValueError("node budget must be >= 1")
    t0 = time.perf_counter()
    if lp_assist == "auto":
        lp_assist = "all" if prob.n_x <= 80 else "root"
    pins0 = np.full(prob.n_x, -1, dtype=np.int8) if pins is None else np.asarray(pins, dtype=np.int8).copy()

    def pinned_repair(xvec):
        # incumbents must honour caller pins or the subproblem objective lies
        sol = repair(prob, xvec)
        if sol is not None and np.any(sol.x[pins0 == 1] != 1.0):
            return None
        return sol

    incumbent = pinned_repair((pins0 == 1).astype(float))

    root = dual_ascent(prob, iters=root_iters, step=step, schedule=schedule, pins=pins0)
    cand = pinned_repair(root.x)
    if cand is not None and (incumbent is None or cand.objective < incumbent.objective):
        incumbent = cand
    root_bound = root.best_bound

    def finish(bound, nodes, complete):
        if incumbent is None:
            raise RuntimeError("no feasible incumbent found")
        incumbent.bound = incumbent.objective if complete else min(bound, incumbent.objective)
        incumbent.gap = max(0.0, incumbent.objective - incumbent.bound)
        incumbent.nodes = nodes
        incumbent.wall_time = time.perf_counter() - t0
        return incumbent

    if root.converged and incumbent is not None:
        # fixed point: the bound is attained by a feasible point, so an
        # incumbent matching it up to float noise is provably optimal
        if incumbent.objective - root_bound <= 4e-13 * (1.0 + abs(root_bound)):
            return finish(incumbent.objective, 1, complete=True)
        if incumbent.objective - root_bound <= tol:
            return finish(root_bound, 1, complete=False)
    if lp_assist in ("root", "all"):
        lval, lpoint = lp_relaxation(prob, pins0)
        if lpoint is None and incumbent is None:
            raise RuntimeError("infeasible problem")
        if lval > root_bound:
            root_bound = _guarded(lval, lval)
        if lpoint is not None:
            incumbent, closed = _try_integral(prob, lpoint, incumbent, pinned_repair)
            if closed and incumbent.objective <= lval + 1e-9 * (1 + abs(lval)):
                return finish(incumbent.objective, 1, complete=True)

    nodes_used = 1
    counter = itertools.count()
    heap = []
    if incumbent is None or incumbent.objective - root_bound > 0:
        heapq.heappush(heap, (root_bound, next(counter), pins0, root.nu, 0))

    while heap:
        bound = heap[0][0]
        if incumbent is not None and incumbent.objective - bound <= tol:
            return finish(bound, nodes_used, complete=False)
        if nodes_used >= node_budget:
            return finish(bound, nodes_used, complete=False)
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            return finish(bound, nodes_used, complete=False)
        _, _, npins, nu, depth = heapq.heappop(heap)
        nodes_used += 1

        state = dual_ascent(prob, iters=node_iters, step=step,
                            schedule=schedule, warm=nu, pins=npins)
        node_bound = max(bound, state.best_bound)
        cand = pinned_repair(state.x)
        if cand is not None and (incumbent is None or cand.objective < incumbent.objective):
            incumbent = cand
        if state.converged:
            continue  # node solved exactly; repair captured its optimum
        if incumbent is not None and node_bound >= incumbent.objective - tol:
            continue  # pruned
        if lp_assist == "all":
            lval, lpoint = lp_relaxation(prob, npins)
            if lval > node_bound:
                node_bound = max(node_bound, _guarded(lval, lval))
            if lpoint is not None:
                incumbent, closed = _try_integral(prob, lpoint, incumbent, pinned_repair)
                if closed and incumbent.objective <= lval + 1e-9 * (1 + abs(lval)):
                    continue  # integral LP optimum solves this node
            if incumbent is not None and node_bound >= incumbent.objective - tol:
                continue
        idx = _branch_index(prob, state, npins)
        if idx is None:
            continue  # fully pinned; repair above covered the leaf
        for val in (0, 1):
            child = npins.copy()
            child[idx] = val
            if _child_feasible(prob, child, idx):
                heapq.heappush(heap, (node_bound, next(counter), child,
                                      state.nu.copy(), depth + 1))

    return finish(incumbent.objective if incumbent else root_bound,
                  nodes_used, complete=True)


# --------------------------------------------------------------------------
# reference solvers


def exhaustive_oracle(prob: AssemblyProblem) -> Solution:
    """True global optimum by enumerating every feasible binary point."""
    if prob.n_x > 20:
        raise ValueError("exhaustive oracle refuses problems with > 20 x-variables")
    R, J = prob.n_regions, prob.n_instances
    best = None
    y_choices = list(itertools.product((0.0, 1.0), repeat=prob.n_y))
    for assign in itertools.product(range(-1, J), repeat=R) if R else [()]:
        x = np.zeros(R * J)
        for i, j in enumerate(assign):
            if j >= 0:
                x[i * J + j] = 1.0
        for ys in y_choices if prob.n_y else [()]:
            y = np.array(ys, dtype=float)
            ok = True
            e_lo = np.zeros(prob.n_e)
            e_hi = np.full(prob.n_e, prob.M)
            for r in prob.rows:
                others = sum(co * x[i] for i, co in r.x) + sum(co * y[i] for i, co in r.y)
                if not r.e:
                    if others > r.rhs + 1e-9:
                        ok = False
                        break
                    continue
                (k, ce) = r.e[0]
                if ce < 0:
                    e_lo[k] = max(e_lo[k], (others - r.rhs) / (-ce))
                else:
                    e_hi[k] = min(e_hi[k], (r.rhs - others) / ce)
            if not ok or np.any(e_lo > e_hi + 1e-12):
                continue
            e = e_lo
            sol = Solution(x=x.copy(), y=y, e=e, objective=0.0, bound=-math.inf,
                           is_feasible=True)
            sol.objective = evaluate_objective(prob, sol)
            if best is None or sol.objective < best.objective:
                best = sol
    if best is None:
        raise RuntimeError("no feasible point (should be impossible)")
    best.bound = best.objective
    return best


def greedy_baseline(prob: AssemblyProblem, node_budget: int = 2000) -> Solution:
    """Assemble one instance at a time: each round solves the single-instance
    subproblem exactly for every open instance, commits the cheapest, and
    consumes its regions."""
    pins = np.full(prob.n_x, -1, dtype=np.int8)
    X = pins.reshape(prob.n_regions, prob.n_instances)
    remaining = list(range(prob.n_instances))
    while remaining:
        results = []
        for j in remaining:
            trial = pins.copy()
            T = trial.reshape(prob.n_regions, prob.n_instances)
            for jj in remaining:
                if jj != j:
                    col = T[:, jj]
                    col[col == -1] = 0  # freeze every other open instance
            sol = branch_and_bound(prob, node_budget=node_budget, tol=1e-9,
                                   pins=trial)
            results.append((sol.objective, j, sol))
        results.sort(key=lambda t: (t[0], t[1]))
        _, j_star, sol = results[0]
        Xs = sol.x.reshape(prob.n_regions, prob.n_instances)
        for i in range(prob.n_regions):
            X[i, j_star] = 1 if Xs[i, j_star] > 0.5 else 0
        remaining.remove(j_star)
    out = repair(prob, (pins == 1).astype(float))
    if out is None:
        raise RuntimeError("greedy commitments became infeasible")
    out.bound = -math.inf
    return out
