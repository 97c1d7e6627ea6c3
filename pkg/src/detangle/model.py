"""Compact assembly integer program.

All three optimizations (stage one torso<->head, stage two arm and leg against
head-torso composites) share one format:

    min  g'x + w'y + phi*1'e
    s.t. A x <= 1                     (each region to at most one instance)
         B x + C e + D y <= f         (coupling, exclusion, color, size)
         x, y binary, 0 <= e <= M

x is laid out region-major: x[i*n_instances + j]. The relaxed block rows are
kept in a canonical order (coupling, exclusion, color, hard size, soft size)
so multiplier indices are reproducible across runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

ROW_TAGS = ("couple", "excl", "color", "hardsize", "softsize_up", "softsize_lo")


@dataclass(frozen=True)
class Params:
    """Objective weights and thresholds; defaults are the standard values."""

    alpha: float = 200.0
    beta: float = 100.0
    gamma: float = 100.0
    theta: float = 40.0
    xi: float = 500.0
    phi: float = 1.0
    pi: float = 2.0e5
    tau: float = 0.2
    eps: float = 0.5
    delta: float = 1.0e-6
    M: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "theta", "xi", "phi", "pi", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0,1)")
        if not 0.0 < self.eps < 2.0:
            raise ValueError("eps must lie in (0,2)")
        if self.M is not None and self.M <= 0:
            raise ValueError("M must be positive when given")


def write_params(path, p: Params) -> None:
    doc = {k: getattr(p, k) for k in Params.__dataclass_fields__}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_params(path) -> Params:
    with open(path) as fh:
        doc = json.load(fh)
    return Params(**doc)


@dataclass(frozen=True)
class Row:
    """One relaxed constraint row: x-, y-, e-coefficients and rhs."""

    tag: str
    x: tuple  # ((index, coef), ...)
    y: tuple
    e: tuple
    rhs: float

    def __post_init__(self):
        if self.tag not in ROW_TAGS:
            raise ValueError(f"unknown row tag {self.tag!r}")


@dataclass(frozen=True)
class AssemblyProblem:
    stage: int
    part: str
    n_regions: int
    n_instances: int
    g: np.ndarray
    w: np.ndarray  # empty in stage two
    phi: float
    M: float
    rows: tuple  # of Row, canonical order
    region_ids: tuple = ()
    instance_ids: tuple = ()

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        if self.g.shape != (self.n_regions * self.n_instances,):
            raise ValueError("g length must be n_regions*n_instances")
        ny = self.n_instances if self.stage == 1 else 0
        if self.w.shape != (ny,):
            raise ValueError("w length inconsistent with stage")
        if self.stage == 2 and any(r.y for r in self.rows):
            raise ValueError("stage-two rows may not reference y")
        nx = self.g.size
        ne = self.n_e
        for r in self.rows:
            if any(not 0 <= i < nx for i, _ in r.x):
                raise ValueError("row references undeclared x variable")
            if any(not 0 <= i < ny for i, _ in r.y):
                raise ValueError("row references undeclared y variable")
            if any(not 0 <= i < ne for i, _ in r.e):
                raise ValueError("row references undeclared e variable")

    @property
    def n_x(self) -> int:
        return self.n_regions * self.n_instances

    @property
    def n_y(self) -> int:
        return self.n_instances if self.stage == 1 else 0

    @property
    def n_e(self) -> int:
        return self.n_instances

    def x_index(self, i: int, j: int) -> int:
        return i * self.n_instances + j

    @cached_property
    def relaxed_block(self):
        """(B, C, D, f) as CSR matrices over the canonical row order."""
        nr = len(self.rows)
        bm = sparse.lil_matrix((nr, self.n_x))
        cm = sparse.lil_matrix((nr, self.n_e))
        dm = sparse.lil_matrix((nr, self.n_y))
        f = np.zeros(nr)
        for k, r in enumerate(self.rows):
            for i, co in r.x:
                bm[k, i] = co
            for i, co in r.e:
                cm[k, i] = co
            for i, co in r.y:
                dm[k, i] = co
            f[k] = r.rhs
        return bm.tocsr(), cm.tocsr(), dm.tocsr(), f


@dataclass
class Solution:
    x: np.ndarray
    y: np.ndarray
    e: np.ndarray
    objective: float
    bound: float
    is_feasible: bool
    gap: float = 0.0
    nodes: int = 0
    wall_time: float = 0.0

    def copy(self) -> "Solution":
        return Solution(
            self.x.copy(), self.y.copy(), self.e.copy(),
            self.objective, self.bound, self.is_feasible,
            self.gap, self.nodes, self.wall_time,
        )


def unary_cost(q: float, r: float, d: float, p: Params) -> float:
    """Assignment cost c = alpha*q + beta*r + gamma*d + theta."""
    return p.alpha * q + p.beta * r + p.gamma * d + p.theta


def evaluate_objective(prob: AssemblyProblem, sol: Solution) -> float:
    """g'x + w'y + phi*1'e, regardless of feasibility."""
    if sol.x.shape != prob.g.shape or sol.y.shape != prob.w.shape or sol.e.size != prob.n_e:
        raise ValueError("solution dimensions do not match problem")
    return float(prob.g @ sol.x + prob.w @ sol.y + prob.phi * np.sum(sol.e))


def validate_solution(prob: AssemblyProblem, sol: Solution, tol: float = 1e-9) -> list:
    """Independent feasibility check; returns a list of violation messages."""
    out = []
    x, y, e = sol.x, sol.y, sol.e
    if not np.all((np.abs(x) < tol) | (np.abs(x - 1) < tol)):
        out.append("x not binary")
    if not np.all((np.abs(y) < tol) | (np.abs(y - 1) < tol)):
        out.append("y not binary")
    if np.any(e < -tol) or np.any(e > prob.M + tol):
        out.append("e outside [0, M]")
    for i in range(prob.n_regions):
        s = x[i * prob.n_instances : (i + 1) * prob.n_instances].sum()
        if s > 1 + tol:
            out.append(f"assignment row {i} violated (sum {s})")
    for k, r in enumerate(prob.rows):
        lhs = sum(co * x[i] for i, co in r.x)
        lhs += sum(co * e[i] for i, co in r.e)
        lhs += sum(co * y[i] for i, co in r.y)
        if lhs > r.rhs + tol:
            out.append(f"row {k} [{r.tag}] violated: {lhs} > {r.rhs}")
    return out


# --------------------------------------------------------------------------
# builders


def _canonical_rows(n_regions, n_instances, areas, scales, iou, color_dist,
                    params, l_target, b_max, gate_on_y):
    """Relaxed rows in canonical family order for either stage."""

    def xi(i, j):
        return i * n_instances + j

    rows = []
    if gate_on_y:
        for i in range(n_regions):
            for j in range(n_instances):
                rows.append(Row("couple", ((xi(i, j), 1.0),), ((j, -1.0),), (), 0.0))
    for m in range(n_regions):
        for n in range(m + 1, n_regions):
            if iou[m, n] > params.tau:
                coefs = tuple((xi(m, j), 1.0) for j in range(n_instances)) + tuple(
                    (xi(n, j), 1.0) for j in range(n_instances)
                )
                rows.append(Row("excl", coefs, (), (), 1.0))
    for u in range(n_regions):
        for v in range(u + 1, n_regions):
            if color_dist[u, v] > params.eps:
                for j in range(n_instances):
                    rows.append(
                        Row("color", ((xi(u, j), 1.0), (xi(v, j), 1.0)), (), (), 1.0)
                    )
    for j in range(n_instances):
        coefs = tuple((xi(i, j), float(areas[i])) for i in range(n_regions))
        rows.append(Row("hardsize", coefs, (), (), float(scales[j] ** 2 * b_max)))
    for j in range(n_instances):
        s2 = float(scales[j] ** 2)
        up = tuple((xi(i, j), float(areas[i]) / s2) for i in range(n_regions))
        lo = tuple((xi(i, j), -float(areas[i]) / s2) for i in range(n_regions))
        rows.append(Row("softsize_up", up, (), ((j, -1.0),), float(l_target)))
        if gate_on_y:
            # vacuous unless the instance is selected: -sum(a/s^2)x - e + l*y <= 0
            rows.append(Row("softsize_lo", lo, ((j, float(l_target)),), ((j, -1.0),), 0.0))
        else:
            rows.append(Row("softsize_lo", lo, (), ((j, -1.0),), -float(l_target)))
    return tuple(rows)


def _slack_bound(l_target: float, b_max: float) -> float:
    # deviation |sum a/s^2 - l| cannot exceed max(l, b-l) under the hard cap
    return float(max(l_target, b_max - l_target))


def build_stage1(torsos, instances, feats, excl, anthro, params: Params) -> AssemblyProblem:
    """Torso regions against head-candidate instances; y selects instances."""
    if not instances:
        raise ValueError("stage one requires at least one head candidate")
    n_r, n_j = len(torsos), len(instances)
    areas = np.array([t.area for t in torsos], dtype=float)
    scales = np.array([h.scale for h in instances], dtype=float)
    g = np.empty(n_r * n_j)
    for i in range(n_r):
        for j in range(n_j):
            c = unary_cost(feats.q[i, j], feats.r[i, j], feats.d[i, j], params)
            g[i * n_j + j] = c - params.pi * feats.cover[i]
    w = params.xi * np.array([1.0 - h.peak_prob for h in instances])
    l_t, b_t = anthro.part_l["torso"], anthro.part_b["torso"]
    rows = _canonical_rows(n_r, n_j, areas, scales, excl.iou, excl.color_dist,
                           params, l_t, b_t, gate_on_y=True)
    M = params.M if params.M is not None else _slack_bound(l_t, b_t)
    return AssemblyProblem(
        stage=1, part="torso", n_regions=n_r, n_instances=n_j,
        g=g, w=w, phi=params.phi, M=M, rows=rows,
        region_ids=tuple(t.id for t in torsos),
        instance_ids=tuple(range(n_j)),
    )


def build_stage2(part, regions, composites, feats, excl, anthro, params: Params) -> AssemblyProblem:
    """Arm or leg regions against the stage-one head-torso composites; y fixed."""
    if part not in ("arm", "leg"):
        raise ValueError("stage two assembles arm or leg regions")
    n_r, n_j = len(regions), len(composites)
    areas = np.array([t.area for t in regions], dtype=float)
    scales = np.array([c.scale for c in composites], dtype=float)
    g = np.empty(n_r * n_j)
    for i in range(n_r):
        for j in range(n_j):
            c = unary_cost(feats.q[i, j], feats.r[i, j], feats.d[i, j], params)
            g[i * n_j + j] = c - params.pi * feats.cover[i]
    l_p, b_p = anthro.part_l[part], anthro.part_b[part]
    rows = _canonical_rows(n_r, n_j, areas, scales, excl.iou, excl.color_dist,
                           params, l_p, b_p, gate_on_y=False)
    M = params.M if params.M is not None else _slack_bound(l_p, b_p)
    return AssemblyProblem(
        stage=2, part=part, n_regions=n_r, n_instances=n_j,
        g=g, w=np.empty(0), phi=params.phi, M=M, rows=rows,
        region_ids=tuple(t.id for t in regions),
        instance_ids=tuple(getattr(c, "id", j) for j, c in enumerate(composites)),
    )


# --------------------------------------------------------------------------
# interchange


def write_problem(path, prob: AssemblyProblem) -> None:
    doc = {
        "stage": prob.stage,
        "part": prob.part,
        "n_regions": prob.n_regions,
        "n_instances": prob.n_instances,
        "g": prob.g.tolist(),
        "w": prob.w.tolist(),
        "phi": prob.phi,
        "M": prob.M,
        "region_ids": list(prob.region_ids),
        "instance_ids": list(prob.instance_ids),
        "rows": [
            {
                "tag": r.tag,
                "x": [[int(i), co] for i, co in r.x],
                "y": [[int(i), co] for i, co in r.y],
                "e": [[int(i), co] for i, co in r.e],
                "rhs": r.rhs,
            }
            for r in prob.rows
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_problem(path) -> AssemblyProblem:
    with open(path) as fh:
        doc = json.load(fh)
    rows = tuple(
        Row(
            tag=r["tag"],
            x=tuple((int(i), float(c)) for i, c in r["x"]),
            y=tuple((int(i), float(c)) for i, c in r["y"]),
            e=tuple((int(i), float(c)) for i, c in r["e"]),
            rhs=float(r["rhs"]),
        )
        for r in doc["rows"]
    )
    return AssemblyProblem(
        stage=doc["stage"],
        part=doc["part"],
        n_regions=doc["n_regions"],
        n_instances=doc["n_instances"],
        g=np.array(doc["g"], dtype=float),
        w=np.array(doc["w"], dtype=float),
        phi=doc["phi"],
        M=doc["M"],
        rows=rows,
        region_ids=tuple(doc.get("region_ids", ())),
        instance_ids=tuple(doc.get("instance_ids", ())),
    )


def write_solution(path, sol: Solution) -> None:
    doc = {
        "x": sol.x.astype(int).tolist(),
        "y": sol.y.astype(int).tolist(),
        "e": sol.e.tolist(),
        "objective": sol.objective,
        "bound": sol.bound,
        "gap": sol.gap,
        "is_feasible": sol.is_feasible,
        "nodes": sol.nodes,
        "wall_time": sol.wall_time,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_solution(path) -> Solution:
    with open(path) as fh:
        doc = json.load(fh)
    return Solution(
        x=np.array(doc["x"], dtype=float),
        y=np.array(doc["y"], dtype=float),
        e=np.array(doc["e"], dtype=float),
        objective=doc["objective"],
        bound=doc["bound"],
        is_feasible=doc["is_feasible"],
        gap=doc.get("gap", 0.0),
        nodes=doc.get("nodes", 0),
        wall_time=doc.get("wall_time", 0.0),
    )
