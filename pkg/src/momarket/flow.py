"""Integral rebalancing flows from a desired idle-vehicle distribution.

The rebalancing program — minimize sum(cost * flow) subject to
    net_inflow(i) + idle(i) >= desired(i)        for every region i,
    outflow(i) <= idle(i)                        for every region i,
    flow >= 0,
— is solved exactly. Because total outflow of a region is capped by its own
starting stock, every unit of stock either stays home (cost 0) or makes one
paid hop, and a multi-hop relay is the same thing as two independent one-hop
shipments. The program is therefore equivalent to a transportation problem
with supplies idle(i), demands desired(j), and unit costs cost[i][j]
(cost 0 on i == j). Successive shortest paths on that bipartite network give
an integral optimum for arbitrary nonnegative costs; ties are broken by edge
insertion order, which is lexicographic in (i, j).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class FlowContractError(RuntimeError):
    """The problem violates its own invariants (desired exceeds available stock)."""


@dataclass
class RebalanceProblem:
    idle: np.ndarray      # int (N,), current idle vehicles
    desired: np.ndarray   # int (N,), target idle vehicles, sum <= sum(idle)
    cost: np.ndarray      # float (N, N), per-vehicle move cost; diagonal ignored


def desired_counts(weights: np.ndarray, total_idle: int) -> np.ndarray:
    """Floor of weight * total idle per region; never exceeds the total."""
    w = np.asarray(weights, dtype=np.float64)
    if w.min() < -1e-12 or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector")
    return np.floor(np.clip(w, 0.0, None) * total_idle).astype(np.int64)


class _Edge:
    __slots__ = ("dst", "cap", "cost", "rev")

    def __init__(self, dst: int, cap: int, cost: float, rev: int):
        self.dst = dst
        self.cap = cap
        self.cost = cost
        self.rev = rev


def solve_min_cost_flow(problem: RebalanceProblem) -> np.ndarray:
    """Minimal-cost integral flow matrix y covering the desired distribution."""
    m = np.asarray(problem.idle, dtype=np.int64)
    want = np.asarray(problem.desired, dtype=np.int64)
    cost = np.asarray(problem.cost, dtype=np.float64)
    n = m.shape[0]
    if want.sum() > m.sum():
        raise FlowContractError(
            f"desired total {int(want.sum())} exceeds idle total {int(m.sum())}")
    if m.min() < 0 or want.min() < 0:
        raise FlowContractError("idle and desired must be nonnegative")
    if want.max() <= 0 or not np.any(want > m):
        # every region already meets its target from its own stock
        return np.zeros((n, n), dtype=np.int64)
    if cost.min() < 0 and np.any(cost[~np.eye(n, dtype=bool)] < 0):
        raise FlowContractError("costs must be nonnegative")

    # Bipartite network over nonempty supplies and positive demands:
    # source -> supply_i -> demand_j -> sink. A supply's own demand is a
    # zero-cost "stay home" edge.
    supplies = np.flatnonzero(m > 0)
    demands = np.flatnonzero(want > 0)
    ns, nd = len(supplies), len(demands)
    n_nodes = ns + nd + 2
    source, sink = ns + nd, ns + nd + 1
    graph: list[list[_Edge]] = [[] for _ in range(n_nodes)]

    def add_edge(u: int, v: int, cap: int, c: float):
        graph[u].append(_Edge(v, cap, c, len(graph[v])))
        graph[v].append(_Edge(u, 0, -c, len(graph[u]) - 1))

    big = int(m.sum()) + 1
    for a, i in enumerate(supplies):
        add_edge(source, a, int(m[i]), 0.0)
    for a, i in enumerate(supplies):
        for b, j in enumerate(demands):
            add_edge(a, ns + b, big, 0.0 if i == j else float(cost[i, j]))
    for b, j in enumerate(demands):
        add_edge(ns + b, sink, int(want[j]), 0.0)

    remaining = int(want.sum())
    inf = float("inf")
    while remaining > 0:
        # Bellman-Ford on the residual network; first-found predecessor on
        # strict improvement keeps the augmentation order deterministic.
        dist = [inf] * n_nodes
        in_queue = [False] * n_nodes
        prev: list[tuple[int, int] | None] = [None] * n_nodes
        dist[source] = 0.0
        queue = deque([source])
        in_queue[source] = True
        while queue:
            u = queue.popleft()
            in_queue[u] = False
            du = dist[u]
            for idx, e in enumerate(graph[u]):
                if e.cap > 0 and du + e.cost < dist[e.dst]:
                    dist[e.dst] = du + e.cost
                    prev[e.dst] = (u, idx)
                    if not in_queue[e.dst]:
                        queue.append(e.dst)
                        in_queue[e.dst] = True
        if dist[sink] == inf:
            raise FlowContractError("rebalancing problem infeasible")
        push = remaining
        v = sink
        while v != source:
            u, idx = prev[v]
            push = min(push, graph[u][idx].cap)
            v = u
        v = sink
        while v != source:
            u, idx = prev[v]
            e = graph[u][idx]
            e.cap -= push
            graph[e.dst][e.rev].cap += push
            v = u
        remaining -= push

    y = np.zeros((n, n), dtype=np.int64)
    for a, i in enumerate(supplies):
        for e in graph[a]:
            if ns <= e.dst < ns + nd:
                j = demands[e.dst - ns]
                if i != j:
                    y[i, j] = graph[e.dst][e.rev].cap
    return y


def flow_cost(y: np.ndarray, cost: np.ndarray) -> float:
    """Objective value of a flow matrix (diagonal ignored)."""
    off = ~np.eye(y.shape[0], dtype=bool)
    return float((y * cost)[off].sum())


def execute_flows(op, y: np.ndarray, travel_time: np.ndarray) -> None:
    """Dispatch rebalancing flows: vehicles leave idle pools now and are
    scheduled to arrive after the travel time. Mutates the operator state."""
    n = y.shape[0]
    outflow = y.sum(axis=1)
    if np.any(outflow > op.idle):
        raise FlowContractError("rebalancing flow exceeds idle vehicles")
    op.idle -= outflow
    for i, j in np.argwhere(y > 0):
        if i == j:
            continue
        op.arrivals[j, travel_time[i, j] - 1] += y[i, j]
