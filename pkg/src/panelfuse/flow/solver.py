"""Exact integer minimum-cost-flow solver.

The algorithm is cost scaling by successive approximation (push-relabel
refine phases with a halving epsilon).  Costs are scaled internally by
(n + 1) so that the final phase at eps == 1 certifies optimality for
integer-cost inputs: a residual cycle would need reduced cost below
-n, which the eps-optimality invariant rules out.

Feasibility is established first by a plain max-flow saturation check
(Dinic) from a super source to a super sink; its flow seeds the first
refine phase.  Everything runs on flat int64 arrays so the hot loops can
be JIT compiled; without numba the same code runs as plain Python.

Determinism: node and arc orders are fixed by the caller, all queues are
FIFO, and arc scans follow arc-index order, so identical networks produce
identical flows.
"""

from __future__ import annotations

import numpy as np

from ..errors import CostOverflowError
from .network import (
    INT64_SAFE,
    FlowNetwork,
    FlowSolution,
    OPTIMAL,
    infeasible_solution,
)

try:  # pragma: no cover - exercised implicitly by every solve
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_BIG = np.int64(2**62)


@njit(cache=True)
def _dinic(n_nodes, first, adj, head, resid, source, sink):
    """Max flow on the residual arrays; returns total units pushed."""
    total = 0
    level = np.empty(n_nodes, np.int64)
    it = np.empty(n_nodes, np.int64)
    queue = np.empty(n_nodes, np.int64)
    node_stack = np.empty(n_nodes + 1, np.int64)
    path = np.empty(n_nodes + 1, np.int64)

    while True:
        for i in range(n_nodes):
            level[i] = -1
        qh, qt = 0, 0
        queue[qt] = source
        qt += 1
        level[source] = 0
        while qh < qt:
            u = queue[qh]
            qh += 1
            for p in range(first[u], first[u + 1]):
                e = adj[p]
                v = head[e]
                if resid[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[sink] < 0:
            break

        for i in range(n_nodes):
            it[i] = first[i]
        depth = 0
        u = source
        while True:
            if u == sink:
                delta = _BIG
                for d in range(depth):
                    e = path[d]
                    if resid[e] < delta:
                        delta = resid[e]
                for d in range(depth):
                    e = path[d]
                    resid[e] -= delta
                    resid[e ^ 1] += delta
                total += delta
                # Retreat to the tail of the first saturated path edge; at
                # least one edge saturated because delta was the minimum.
                nd = 0
                while nd < depth and resid[path[nd]] > 0:
                    nd += 1
                depth = nd
                u = node_stack[nd]
                continue
            advanced = False
            while it[u] < first[u + 1]:
                e = adj[it[u]]
                v = head[e]
                if resid[e] > 0 and level[v] == level[u] + 1:
                    node_stack[depth] = u
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                level[u] = -1
                if depth == 0:
                    break
                depth -= 1
                u = node_stack[depth]
                it[u] += 1
    return total


@njit(cache=True)
def _cost_scaling(n_nodes, first, adj, head, tail, cost, resid, eps0):
    """Refine loop: returns 0 on success, 1 if a node got stuck (no residual arc).

    ``cost`` must already carry the (n + 1) scaling.  On success ``resid``
    encodes an optimal flow.
    """
    pi = np.zeros(n_nodes, np.int64)
    excess = np.zeros(n_nodes, np.int64)
    cur = np.empty(n_nodes, np.int64)
    inq = np.zeros(n_nodes, np.bool_)
    queue = np.empty(n_nodes + 1, np.int64)
    n_entries = len(head)

    eps = eps0
    while True:
        # Saturate every residual entry whose reduced cost is negative;
        # the resulting pseudoflow is 0-optimal, then push-relabel restores
        # balances while keeping eps-optimality.
        for e in range(n_entries):
            if resid[e] > 0 and cost[e] - pi[tail[e]] + pi[head[e]] < 0:
                delta = resid[e]
                resid[e] = 0
                resid[e ^ 1] += delta
                excess[tail[e]] -= delta
                excess[head[e]] += delta

        qh, qt = 0, 0
        for u in range(n_nodes):
            cur[u] = first[u]
            if excess[u] > 0:
                queue[qt] = u
                qt = (qt + 1) % (n_nodes + 1)
                inq[u] = True
            else:
                inq[u] = False

        while qh != qt:
            u = queue[qh]
            qh = (qh + 1) % (n_nodes + 1)
            inq[u] = False
            while excess[u] > 0:
                if cur[u] == first[u + 1]:
                    # Relabel: lift pi[u] to make the cheapest residual arc
                    # admissible while preserving eps-optimality.
                    best = _BIG
                    for p in range(first[u], first[u + 1]):
                        e = adj[p]
                        if resid[e] > 0:
                            cand = pi[head[e]] + cost[e]
                            if cand < best:
                                best = cand
                    if best == _BIG:
                        return 1
                    pi[u] = best + eps
                    cur[u] = first[u]
                else:
                    e = adj[cur[u]]
                    if resid[e] > 0 and cost[e] - pi[u] + pi[head[e]] < 0:
                        v = head[e]
                        delta = excess[u]
                        if resid[e] < delta:
                            delta = resid[e]
                        resid[e] -= delta
                        resid[e ^ 1] += delta
                        excess[u] -= delta
                        excess[v] += delta
                        if excess[v] > 0 and not inq[v]:
                            queue[qt] = v
                            qt = (qt + 1) % (n_nodes + 1)
                            inq[v] = True
                    else:
                        cur[u] += 1

        if eps == 1:
            return 0
        eps = eps // 2
        if eps < 1:
            eps = 1


def _build_csr(n_nodes, tails, n_entries):
    """CSR adjacency over entry ids, stable by entry index within a node."""
    order = np.argsort(tails[:n_entries], kind="stable").astype(np.int64)
    counts = np.bincount(tails[:n_entries], minlength=n_nodes)
    first = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=first[1:])
    return first, order


def _check_magnitudes(network: FlowNetwork) -> None:
    n = network.n_nodes
    max_c = network.max_abs_cost()
    supply = network.total_supply()
    if max_c * max(supply, 1) >= INT64_SAFE:
        raise CostOverflowError(
            f"cost magnitude {max_c} x total supply {supply} exceeds the 64-bit budget"
        )
    # Potentials grow by O(n * eps0) across phases; keep a wide margin.
    if 8 * (n + 2) * max_c * (n + 1) >= INT64_SAFE:
        raise CostOverflowError(
            f"cost magnitude {max_c} too large for {n} nodes (potential overflow risk)"
        )


def warmup() -> None:
    """Force JIT compilation of the kernels (useful before forking workers)."""
    net = FlowNetwork(node_ids=["s", "t"], balances=[1, -1])
    from .network import Arc

    net.arcs.append(Arc(0, 1, 1))
    solve_mcf(net)


def solve_mcf(network: FlowNetwork) -> FlowSolution:
    """Solve the instance exactly; returns an infeasible solution if no flow exists.

    Ties among equal-cost optima are broken deterministically by node and
    arc order.
    """
    network.validate()
    _check_magnitudes(network)
    if any(a.lower != 0 for a in network.arcs):
        raise ValueError("nonzero lower bounds are not supported")

    n = network.n_nodes
    m = len(network.arcs)
    supply = network.total_supply()
    cap_bound = supply

    supplies = [(i, b) for i, b in enumerate(network.balances) if b > 0]
    demands = [(i, -b) for i, b in enumerate(network.balances) if b < 0]
    n_extra = len(supplies) + len(demands)
    n_entries = 2 * m + 2 * n_extra

    head = np.empty(n_entries, dtype=np.int64)
    tail = np.empty(n_entries, dtype=np.int64)
    cost = np.zeros(n_entries, dtype=np.int64)
    resid = np.zeros(n_entries, dtype=np.int64)

    scale = n + 1
    for k, arc in enumerate(network.arcs):
        f, b = 2 * k, 2 * k + 1
        tail[f], head[f] = arc.tail, arc.head
        tail[b], head[b] = arc.head, arc.tail
        cost[f] = arc.cost * scale
        cost[b] = -arc.cost * scale
        resid[f] = cap_bound if arc.upper is None else arc.upper
        resid[b] = 0

    # Super source n, super sink n+1 for the feasibility max-flow.
    source, sink = n, n + 1
    pos = 2 * m
    for i, b in supplies:
        tail[pos], head[pos], resid[pos] = source, i, b
        tail[pos + 1], head[pos + 1], resid[pos + 1] = i, source, 0
        pos += 2
    for i, d in demands:
        tail[pos], head[pos], resid[pos] = i, sink, d
        tail[pos + 1], head[pos + 1], resid[pos + 1] = sink, i, 0
        pos += 2

    first_ext, adj_ext = _build_csr(n + 2, tail, n_entries)
    pushed = _dinic(n + 2, first_ext, adj_ext, head, resid, np.int64(source), np.int64(sink))
    if pushed < supply:
        return infeasible_solution()

    if m > 0 and network.max_abs_cost() > 0:
        first, adj = _build_csr(n, tail[: 2 * m], 2 * m)
        eps0 = int(cost[: 2 * m].max())
        status = _cost_scaling(
            n, first, adj, head[: 2 * m], tail[: 2 * m], cost[: 2 * m], resid[: 2 * m], np.int64(eps0)
        )
        if status != 0:
            return infeasible_solution()

    flows = []
    total = 0
    for k, arc in enumerate(network.arcs):
        upper = cap_bound if arc.upper is None else arc.upper
        x = int(upper - resid[2 * k])
        flows.append(x)
        total += arc.cost * x
    return FlowSolution(status=OPTIMAL, flows=tuple(flows), total_cost=total)
