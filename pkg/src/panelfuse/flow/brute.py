"""Exhaustive oracle for small transportation instances.

Complete search over integer allocations of each supply node's units to
its outgoing arcs.  Branches are cut only by sound rules: a lower bound
(every unfilled demand unit pays at least the cheapest arc still able to
reach it), a dominance memo on (supply index, remaining demands), and
forced placement on a supply's last arc.  Pruning never discards an
optimal branch, so the result is exact.  Test-only by design: instance
size is capped and exceeding the cap is an explicit error.
"""

from __future__ import annotations

from ..errors import OracleCapError
from .network import FlowNetwork, FlowSolution, OPTIMAL, infeasible_solution

DEFAULT_MAX_UNITS = 64
DEFAULT_MAX_SIDE = 8

_INF = 1 << 60


def brute_force_mcf(
    network: FlowNetwork,
    max_units: int = DEFAULT_MAX_UNITS,
    max_side: int = DEFAULT_MAX_SIDE,
) -> FlowSolution:
    """Globally optimal solution of a bipartite supply->demand instance."""
    network.validate()
    supply_nodes = [i for i, b in enumerate(network.balances) if b > 0]
    demand_nodes = [i for i, b in enumerate(network.balances) if b < 0]
    if any(b == 0 for b in network.balances):
        raise OracleCapError("oracle supports supply/demand nodes only (no transshipment)")
    if len(supply_nodes) > max_side or len(demand_nodes) > max_side:
        raise OracleCapError(
            f"oracle cap exceeded: {len(supply_nodes)}x{len(demand_nodes)} nodes "
            f"(cap {max_side} per side)"
        )
    total = sum(network.balances[i] for i in supply_nodes)
    if total > max_units:
        raise OracleCapError(f"oracle cap exceeded: total supply {total} > {max_units}")
    if any(a.lower != 0 for a in network.arcs):
        raise OracleCapError("oracle requires zero lower bounds")

    demand_pos = {node: j for j, node in enumerate(demand_nodes)}
    supply_set = set(supply_nodes)
    n_s, n_d = len(supply_nodes), len(demand_nodes)

    # (arc_index, demand_position, cost, upper) per supply node, cheapest
    # first so good incumbents appear early and tighten the bound.
    out_arcs: list[list[tuple[int, int, int, int]]] = [[] for _ in range(n_s)]
    supply_pos = {node: i for i, node in enumerate(supply_nodes)}
    cap_bound = network.capacity_bound()
    for idx, arc in enumerate(network.arcs):
        if arc.tail not in supply_set or arc.head not in demand_pos:
            raise OracleCapError("oracle supports supply->demand arcs only")
        out_arcs[supply_pos[arc.tail]].append(
            (idx, demand_pos[arc.head], arc.cost, cap_bound if arc.upper is None else arc.upper)
        )
    for arcs in out_arcs:
        arcs.sort(key=lambda t: (t[2], t[0]))

    # cheapest arc into each demand among supplies s.. (suffix over supplies)
    into_sfx = [[_INF] * n_d for _ in range(n_s + 1)]
    for s in range(n_s - 1, -1, -1):
        row = list(into_sfx[s + 1])
        for _idx, j, cost, _u in out_arcs[s]:
            if cost < row[j]:
                row[j] = cost
        into_sfx[s] = row
    # cheapest arc into each demand among this supply's arcs a.. (suffix per supply)
    arc_sfx: list[list[list[int]]] = []
    for s in range(n_s):
        rows = [[_INF] * n_d]
        for arc in reversed(out_arcs[s]):
            row = list(rows[0])
            if arc[2] < row[arc[1]]:
                row[arc[1]] = arc[2]
            rows.insert(0, row)
        arc_sfx.append(rows)

    best_cost: list = [None]
    best_alloc: list = [None]
    memo: dict = {}
    alloc = [0] * len(network.arcs)
    demand_rem = [-network.balances[j] for j in demand_nodes]
    supplies = [network.balances[i] for i in supply_nodes]

    def bound(s_pos: int, a_pos: int) -> int | None:
        lb = 0
        cur = arc_sfx[s_pos][a_pos] if s_pos < n_s else None
        nxt = into_sfx[s_pos + 1] if s_pos < n_s else into_sfx[n_s]
        for j in range(n_d):
            r = demand_rem[j]
            if r:
                m = nxt[j]
                if cur is not None and cur[j] < m:
                    m = cur[j]
                if m >= _INF:
                    return None  # demand no longer reachable: dead branch
                lb += r * m
        return lb

    def place_supply(s_pos: int, cost_so_far: int):
        if s_pos == n_s:
            # demand_rem is all zero here: units only land on open demand,
            # and total supply equals total demand.
            if best_cost[0] is None or cost_so_far < best_cost[0]:
                best_cost[0] = cost_so_far
                best_alloc[0] = alloc.copy()
            return
        key = (s_pos, tuple(demand_rem))
        seen = memo.get(key)
        if seen is not None and seen <= cost_so_far:
            return
        memo[key] = cost_so_far
        place_units(s_pos, 0, supplies[s_pos], cost_so_far)

    def place_units(s_pos: int, a_pos: int, units_left: int, cost_acc: int):
        if units_left == 0:
            place_supply(s_pos + 1, cost_acc)
            return
        arcs = out_arcs[s_pos]
        if a_pos == len(arcs):
            return
        lb = bound(s_pos, a_pos)
        if lb is None:
            return
        if best_cost[0] is not None and cost_acc + lb >= best_cost[0]:
            return
        idx, j, cost, upper = arcs[a_pos]
        hi = min(units_left, demand_rem[j], upper)
        if a_pos == len(arcs) - 1:
            # last arc: the rest of this supply must go here or nowhere
            if hi == units_left:
                alloc[idx] = hi
                demand_rem[j] -= hi
                place_supply(s_pos + 1, cost_acc + cost * hi)
                demand_rem[j] += hi
                alloc[idx] = 0
            return
        for x in range(hi, -1, -1):
            alloc[idx] = x
            demand_rem[j] -= x
            place_units(s_pos, a_pos + 1, units_left - x, cost_acc + cost * x)
            demand_rem[j] += x
            alloc[idx] = 0

    place_supply(0, 0)
    if best_cost[0] is None:
        return infeasible_solution()
    return FlowSolution(status=OPTIMAL, flows=tuple(best_alloc[0]), total_cost=best_cost[0])
