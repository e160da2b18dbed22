"""Flow network model: nodes with signed balances, arcs with bounds and costs.

Balances are integer units: positive = supply, negative = demand, zero =
transshipment.  An arc's ``upper=None`` means "unbounded", which the solver
resolves to the total supply of the network (no feasible flow can exceed it).
All quantities are integers so mass balance can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# 64-bit budget for cost accumulation and solver potentials.
INT64_SAFE = 2**62

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    cost: int
    lower: int = 0
    upper: int | None = None  # None = unbounded (total-supply sentinel)


@dataclass
class FlowNetwork:
    """A min-cost-flow instance over dense node indices 0..n-1.

    ``node_ids`` carries caller-facing names (one per index); solvers break
    ties by node index and arc index, so builders control determinism by
    listing nodes and arcs in a canonical order.
    """

    node_ids: list
    balances: list[int]
    arcs: list[Arc] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def total_supply(self) -> int:
        return sum(b for b in self.balances if b > 0)

    def capacity_bound(self) -> int:
        """Finite stand-in for unbounded arc capacity."""
        return self.total_supply()

    def max_abs_cost(self) -> int:
        return max((abs(a.cost) for a in self.arcs), default=0)

    def arc_upper(self, arc: Arc) -> int:
        return self.capacity_bound() if arc.upper is None else arc.upper

    def validate(self) -> None:
        """Raise ValueError on any structural invariant violation."""
        n = self.n_nodes
        if len(self.balances) != n:
            raise ValueError("node_ids and balances length mismatch")
        if len(set(self.node_ids)) != n:
            raise ValueError("duplicate node ids")
        for b in self.balances:
            if b != int(b):
                raise ValueError("balances must be integers")
        if sum(self.balances) != 0:
            raise ValueError(f"balances must sum to 0, got {sum(self.balances)}")
        for i, a in enumerate(self.arcs):
            if not (0 <= a.tail < n and 0 <= a.head < n):
                raise ValueError(f"arc {i} references missing node")
            if a.tail == a.head:
                raise ValueError(f"arc {i} is a self-loop")
            if a.lower < 0:
                raise ValueError(f"arc {i} has negative lower bound")
            if a.upper is not None and a.lower > a.upper:
                raise ValueError(f"arc {i} has lower > upper")


@dataclass(frozen=True)
class FlowSolution:
    """Per-arc integer flows (aligned with ``network.arcs``) plus cost."""

    status: str
    flows: tuple[int, ...]
    total_cost: int

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def infeasible_solution() -> FlowSolution:
    return FlowSolution(status=INFEASIBLE, flows=(), total_cost=0)


@dataclass
class VerificationReport:
    """Exact re-check of a solution against its network.

    ``node_violations`` holds (node_id, required_balance, actual_net_outflow)
    for every node whose mass balance fails; ``bound_violations`` holds
    (arc_index, flow, lower, upper) for out-of-bound flows.
    """

    node_violations: list
    bound_violations: list
    recomputed_cost: int
    declared_cost: int

    @property
    def cost_matches(self) -> bool:
        return self.recomputed_cost == self.declared_cost

    @property
    def passed(self) -> bool:
        return not self.node_violations and not self.bound_violations and self.cost_matches


def verify_solution(network: FlowNetwork, solution: FlowSolution) -> VerificationReport:
    """Recompute mass balance, flow bounds, and total cost from scratch."""
    n = network.n_nodes
    flows = solution.flows
    if len(flows) != len(network.arcs):
        # An infeasible (empty) solution verifies only against a network
        # that needs no flow at all.
        flows = tuple([0] * len(network.arcs))

    net_out = [0] * n
    cost = 0
    bound_violations = []
    cap_bound = network.capacity_bound()
    for i, (arc, x) in enumerate(zip(network.arcs, flows)):
        net_out[arc.tail] += x
        net_out[arc.head] -= x
        cost += arc.cost * x
        upper = cap_bound if arc.upper is None else arc.upper
        if not (arc.lower <= x <= upper):
            bound_violations.append((i, x, arc.lower, upper))

    node_violations = [
        (network.node_ids[i], network.balances[i], net_out[i])
        for i in range(n)
        if net_out[i] != network.balances[i]
    ]
    return VerificationReport(
        node_violations=node_violations,
        bound_violations=bound_violations,
        recomputed_cost=cost,
        declared_cost=solution.total_cost,
    )


def to_dimacs(network: FlowNetwork, comment: str = "") -> str:
    """Dump the network as DIMACS min-cost-flow text for external cross-checks.

    Node numbering is 1-based in ``node_ids`` order; unbounded uppers are
    materialized as the total-supply sentinel.
    """
    lines = []
    if comment:
        for row in comment.splitlines():
            lines.append(f"c {row}")
    lines.append(f"p min {network.n_nodes} {len(network.arcs)}")
    for i, b in enumerate(network.balances):
        if b != 0:
            lines.append(f"n {i + 1} {b}")
    cap_bound = network.capacity_bound()
    for a in network.arcs:
        upper = cap_bound if a.upper is None else a.upper
        lines.append(f"a {a.tail + 1} {a.head + 1} {a.lower} {upper} {a.cost}")
    return "\n".join(lines) + "\n"
