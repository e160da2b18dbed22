import random

import pytest

from panelfuse import Arc, FlowNetwork, Panel, Panelist


def t1_network() -> FlowNetwork:
    """2x2 transportation instance with a unique optimum of cost 7."""
    net = FlowNetwork(node_ids=["u1", "u2", "v1", "v2"], balances=[2, 3, -4, -1])
    net.arcs = [Arc(0, 2, 1), Arc(0, 3, 3), Arc(1, 2, 2), Arc(1, 3, 1)]
    return net


def random_transportation(seed: int, max_side: int = 6, max_balance: int = 10, max_cost: int = 20,
                          arc_prob: float = 1.0) -> FlowNetwork:
    rng = random.Random(seed)
    n_s = rng.randint(1, max_side)
    n_d = rng.randint(1, max_side)
    supplies = [rng.randint(1, max_balance) for _ in range(n_s)]
    total = sum(supplies)
    demands = [1] * n_d
    rem = total - n_d
    if rem < 0:
        demands = [0] * n_d
        rem = total
    for _ in range(rem):
        demands[rng.randrange(n_d)] += 1
    demands = [d for d in demands if d > 0]
    net = FlowNetwork(
        node_ids=[f"u{i}" for i in range(n_s)] + [f"v{j}" for j in range(len(demands))],
        balances=supplies + [-d for d in demands],
    )
    for i in range(n_s):
        for j in range(len(demands)):
            if rng.random() < arc_prob:
                net.arcs.append(Arc(i, n_s + j, rng.randint(0, max_cost)))
    return net


def make_panel(rows, categorical_names=("color",), real_names=("x",), unit_scale=None) -> Panel:
    """rows: (id, weight, categorical tuple, real tuple, units)"""
    panel = Panel(categorical_names=tuple(categorical_names), real_names=tuple(real_names),
                  unit_scale=unit_scale)
    for pid, weight, cats, reals, units in rows:
        panel.panelists.append(
            Panelist(id=pid, weight=weight, units=units, categorical=tuple(cats), real=tuple(reals))
        )
    return panel


def assert_mass_balance(assignments, left: Panel, right: Panel):
    """Every panelist's assigned units must sum exactly to its units."""
    by_left = assignments.units_by_left()
    by_right = assignments.units_by_right()
    for p in left.panelists:
        assert by_left.get(p.id, 0) == p.units, f"left {p.id}: {by_left.get(p.id, 0)} != {p.units}"
    for p in right.panelists:
        assert by_right.get(p.id, 0) == p.units, f"right {p.id}: {by_right.get(p.id, 0)} != {p.units}"


@pytest.fixture(scope="session", autouse=True)
def _warm_solver():
    from panelfuse.flow import warmup

    warmup()
