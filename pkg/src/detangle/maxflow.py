"""Push-relabel max-flow / min-cut on integer capacities.

Capacities must be non-negative integers; float energies are converted by
multiplying by 1000 and flooring (see :func:`scale_capacity`).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

CAPACITY_SCALE = 1000
_CAP_LIMIT = 1 << 60  # reject graphs whose total capacity could overflow int64


def scale_capacity(value: float) -> int:
    """Float capacity -> integer: multiply by 1000, floor.

    A 1e-9 nudge keeps capacities that are exact multiples of 1/1000 from
    flooring one integer low due to float representation.
    """
    if value < 0:
        raise ValueError(f"negative capacity {value}")
    return int(math.floor(value * CAPACITY_SCALE + 1e-9))


@njit(cache=True)
def _push_relabel(n, s, t, adj_start, adj_edge, edge_to, cap):
    """FIFO push-relabel with current-arc; cap is mutated into residuals."""
    height = np.zeros(n, dtype=np.int64)
    excess = np.zeros(n, dtype=np.int64)
    cur = adj_start[:n].copy()
    inq = np.zeros(n, dtype=np.uint8)
    queue = np.empty(n + 2, dtype=np.int64)
    qcap = n + 2
    qh = 0
    qt = 0

    height[s] = n
    for idx in range(adj_start[s], adj_start[s + 1]):
        e = adj_edge[idx]
        amt = cap[e]
        if amt > 0:
            v = edge_to[e]
            cap[e] -= amt
            cap[e ^ 1] += amt
            excess[v] += amt
            excess[s] -= amt
            if v != s and v != t and inq[v] == 0:
                queue[qt] = v
                qt = (qt + 1) % qcap
                inq[v] = 1

    while qh != qt:
        u = queue[qh]
        qh = (qh + 1) % qcap
        inq[u] = 0
        while excess[u] > 0:
            if cur[u] == adj_start[u + 1]:
                # relabel: one above the lowest residual neighbour
                mh = 2 * n
                for idx in range(adj_start[u], adj_start[u + 1]):
                    e = adj_edge[idx]
                    if cap[e] > 0:
                        hv = height[edge_to[e]]
                        if hv < mh:
                            mh = hv
                if mh >= 2 * n:
                    break  # no residual edge at all
                height[u] = mh + 1
                cur[u] = adj_start[u]
            else:
                e = adj_edge[cur[u]]
                v = edge_to[e]
                if cap[e] > 0 and height[u] == height[v] + 1:
                    amt = excess[u]
                    if cap[e] < amt:
                        amt = cap[e]
                    cap[e] -= amt
                    cap[e ^ 1] += amt
                    excess[u] -= amt
                    excess[v] += amt
                    if v != s and v != t and inq[v] == 0:
                        queue[qt] = v
                        qt = (qt + 1) % qcap
                        inq[v] = 1
                else:
                    cur[u] += 1
    return excess[t]


class FlowGraph:
    """Directed flow network with paired residual edges."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self._from = []
        self._to = []
        self._cap = []

    def add_edge(self, u: int, v: int, cap: int, rcap: int = 0) -> None:
        """Add edge u->v with integer capacity (and optional reverse capacity)."""
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise ValueError(f"edge ({u},{v}) outside node range")
        if cap != int(cap) or rcap != int(rcap):
            raise ValueError("capacities must be integers; scale floats first")
        cap = int(cap)
        rcap = int(rcap)
        if cap < 0 or rcap < 0:
            raise ValueError("capacities must be non-negative integers")
        self._from.append(u)
        self._to.append(v)
        self._cap.append(cap)
        self._from.append(v)
        self._to.append(u)
        self._cap.append(rcap)

    def max_flow(self, source: int, sink: int):
        """Run push-relabel; returns (flow value, source-side boolean mask).

        The mask certifies the flow: the capacity of the cut it induces
        equals the returned flow value.
        """
        if source == sink:
            raise ValueError("source equals sink")
        if sum(self._cap) >= _CAP_LIMIT:
            raise ValueError("total capacity too large: would overflow")
        m = len(self._to)
        edge_to = np.asarray(self._to, dtype=np.int64) if m else np.empty(0, np.int64)
        cap = np.asarray(self._cap, dtype=np.int64) if m else np.empty(0, np.int64)
        efrom = np.asarray(self._from, dtype=np.int64) if m else np.empty(0, np.int64)
        order = np.argsort(efrom, kind="stable")
        counts = np.bincount(efrom, minlength=self.n) if m else np.zeros(self.n, np.int64)
        adj_start = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=adj_start[1:])
        adj_edge = order.astype(np.int64)

        flow = _push_relabel(self.n, source, sink, adj_start, adj_edge, edge_to, cap)
        residual = cap  # mutated in place by the kernel

        # source side of the min cut: nodes reachable in the residual graph
        side = np.zeros(self.n, dtype=bool)
        side[source] = True
        stack = [source]
        while stack:
            u = stack.pop()
            for idx in range(adj_start[u], adj_start[u + 1]):
                e = adj_edge[idx]
                v = edge_to[e]
                if residual[e] > 0 and not side[v]:
                    side[v] = True
                    stack.append(v)
        return int(flow), side
