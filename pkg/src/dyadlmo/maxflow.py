"""Dinic max-flow on a fixed CSR graph with float capacities.

The graph structure is built once per grid shape; only capacities change
between solves.  ``min_cut_source_side`` returns the set of nodes reachable
from the source in the final residual graph, which is the inclusion-minimal
source side among all minimum cuts.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _bfs(n, start, to, cap, eps, source, level, queue):
    level[:] = -1
    level[source] = 0
    qh = 0
    qt = 0
    queue[qt] = source
    qt += 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for e in range(start[u], start[u + 1]):
            v = to[e]
            if level[v] < 0 and cap[e] > eps:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1
    return level


@numba.njit(cache=True)
def _dinic(n, start, to, rev, cap, source, sink, eps):
    level = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    flow = 0.0
    while True:
        _bfs(n, start, to, cap, eps, source, level, queue)
        if level[sink] < 0:
            break
        for u in range(n):
            it[u] = start[u]
        # iterative DFS with current-arc pointers; path holds edge ids
        depth = 0
        u = source
        while True:
            if u == sink:
                f = np.inf
                for d in range(depth):
                    if cap[path[d]] < f:
                        f = cap[path[d]]
                back = depth
                for d in range(depth):
                    e = path[d]
                    cap[e] -= f
                    cap[rev[e]] += f
                    if cap[e] <= eps and d < back:
                        back = d
                flow += f
                depth = back
                u = source if depth == 0 else to[path[depth - 1]]
                continue
            advanced = False
            while it[u] < start[u + 1]:
                e = it[u]
                v = to[e]
                if cap[e] > eps and level[v] == level[u] + 1:
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if advanced:
                continue
            if u == source:
                break
            # dead end: drop u from this phase and retreat
            level[u] = -1
            depth -= 1
            prev = to[rev[path[depth]]]
            it[prev] += 1
            u = prev
    return flow


@numba.njit(cache=True)
def _reachable(n, start, to, cap, source, eps):
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[source] = True
    queue[0] = source
    qh = 0
    qt = 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for e in range(start[u], start[u + 1]):
            v = to[e]
            if not seen[v] and cap[e] > eps:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


class FlowGraph:
    """Directed graph in CSR form with paired reverse edges."""

    def __init__(self, n_nodes: int, edges: list[tuple[int, int]]):
        self.n = n_nodes
        m = len(edges)
        tail = np.empty(2 * m, dtype=np.int64)
        head = np.empty(2 * m, dtype=np.int64)
        for i, (u, v) in enumerate(edges):
            tail[2 * i], head[2 * i] = u, v
            tail[2 * i + 1], head[2 * i + 1] = v, u
        order = np.argsort(tail, kind="stable")
        pos = np.empty(2 * m, dtype=np.int64)
        pos[order] = np.arange(2 * m)
        self.to = head[order]
        self.rev = pos[np.arange(2 * m) ^ 1][order]
        counts = np.bincount(tail, minlength=n_nodes)
        self.start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        # position in CSR of the forward copy of each input edge
        self.forward = pos[0::2]

    def min_cut_source_side(self, capacities: np.ndarray, source: int, sink: int, eps: float):
        """Run max-flow; return (flow value, boolean source-side mask)."""
        cap = np.zeros(len(self.to))
        cap[self.forward] = capacities
        flow = _dinic(self.n, self.start, self.to, self.rev, cap, source, sink, eps)
        side = _reachable(self.n, self.start, self.to, cap, source, eps)
        return flow, side
