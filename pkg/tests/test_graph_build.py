"""Normalization, cost model, bipartite construction, and pruning."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelfuse import (
    CostModel,
    CostOverflowError,
    PruneConfig,
    Panelist,
    SchemaMismatchError,
    build_bipartite,
    count_arcs,
    default_prune_k,
    distance,
    normalize_features,
    prune_edges,
)
from panelfuse.graph import CandidateArc, add_balancing_node

from conftest import make_panel


def _panelist(pid="p", cats=("a",), reals=(0.0,), units=1):
    return Panelist(id=pid, weight=1.0, units=units, categorical=tuple(cats), real=tuple(reals))


# --- normalization -----------------------------------------------------------


def test_minmax_normalization():
    left = make_panel([("l1", 1, ("a",), (0.0,), 1), ("l2", 1, ("a",), (5.0,), 1)])
    right = make_panel([("r1", 1, ("a",), (10.0,), 1)])
    nl, nr, schema = normalize_features(left, right)
    assert [p.real[0] for p in nl.panelists] == [0.0, 0.5]
    assert nr.panelists[0].real[0] == 1.0
    assert schema.real_ranges == ((0.0, 10.0),)


def test_constant_feature_maps_to_zero():
    left = make_panel([("l1", 1, ("a",), (7.0,), 1), ("l2", 1, ("a",), (7.0,), 1)])
    right = make_panel([("r1", 1, ("a",), (7.0,), 1)])
    nl, nr, _ = normalize_features(left, right)
    assert all(p.real[0] == 0.0 for p in nl.panelists + nr.panelists)


def test_ranges_equalized():
    # a [0,100] feature and a [0,1] feature both land in [0,1]
    left = make_panel(
        [("l1", 1, ("a",), (0.0, 0.0), 1), ("l2", 1, ("a",), (100.0, 1.0), 1)],
        real_names=("big", "small"),
    )
    right = make_panel([("r1", 1, ("a",), (50.0, 0.5), 1)], real_names=("big", "small"))
    nl, nr, _ = normalize_features(left, right)
    assert nl.panelists[1].real == (1.0, 1.0)
    assert nr.panelists[0].real == (0.5, 0.5)


def test_schema_mismatch_named():
    left = make_panel([("l1", 1, ("a",), (0.0,), 1)], real_names=("x",))
    right = make_panel([("r1", 1, ("a",), (0.0,), 1)], real_names=("y",))
    with pytest.raises(SchemaMismatchError):
        normalize_features(left, right)


# --- distance ----------------------------------------------------------------


def test_distance_squared_l2():
    # normalized vectors [0.25, 0.5] vs [0.25, 1.0]: squared distance 0.25
    a = _panelist("a", ("m",), (0.25, 0.5))
    b = _panelist("b", ("m",), (0.25, 1.0))
    assert distance(a, b, CostModel(mode="soft", cost_scale=100)) == 25


def test_distance_identical_is_zero():
    a = _panelist("a", ("m", "x"), (0.3, 0.9))
    for mode in ("hard", "soft"):
        assert distance(a, a, CostModel(mode=mode)) == 0


def test_hard_mode_excludes_category_mismatch():
    a = _panelist("a", ("m",), (0.5,))
    b = _panelist("b", ("f",), (0.5,))
    assert distance(a, b, CostModel(mode="hard")) is None


def test_soft_mode_penalty_per_mismatch():
    a = _panelist("a", ("m", "young"), (0.5,))
    b = _panelist("b", ("f", "young"), (0.5,))
    model = CostModel(mode="soft", penalty=1000)
    assert distance(a, b, model) == 1000
    c = _panelist("c", ("f", "old"), (0.5,))
    assert distance(a, c, model) == 2000


@st.composite
def normalized_panelists(draw):
    cats = tuple(draw(st.sampled_from(["a", "b", "c"])) for _ in range(2))
    reals = tuple(
        draw(st.floats(min_value=0.0, max_value=1.0, allow_nan=False)) for _ in range(3)
    )
    return _panelist(draw(st.text(min_size=1, max_size=4)), cats, reals)


@settings(max_examples=60, deadline=None)
@given(normalized_panelists(), normalized_panelists(), st.sampled_from(["hard", "soft"]))
def test_distance_symmetric(a, b, mode):
    model = CostModel(mode=mode)
    assert distance(a, b, model) == distance(b, a, model)


@settings(max_examples=60, deadline=None)
@given(normalized_panelists(), normalized_panelists())
def test_hard_arcs_subset_of_soft(a, b):
    hard = distance(a, b, CostModel(mode="hard"))
    soft = distance(a, b, CostModel(mode="soft"))
    assert soft is not None
    if hard is not None:
        assert hard <= soft


# --- bipartite construction ----------------------------------------------------


def _two_by_two(left_cats, right_cats):
    left = make_panel(
        [("l1", 1, (left_cats[0],), (0.1,), 10), ("l2", 1, (left_cats[1],), (0.2,), 10)]
    )
    right = make_panel(
        [("r1", 1, (right_cats[0],), (0.3,), 10), ("r2", 1, (right_cats[1],), (0.4,), 10)]
    )
    return left, right


def test_dense_build_same_categories():
    left, right = _two_by_two(("a", "a"), ("a", "a"))
    build = build_bipartite(left, right, CostModel(mode="hard"))
    assert len(build.network.arcs) == 4
    assert build.network.balances == [10, 10, -10, -10]
    assert build.isolated_left == [] and build.isolated_right == []


def test_hard_mode_excludes_cross_blocks():
    left, right = _two_by_two(("a", "b"), ("a", "b"))
    build = build_bipartite(left, right, CostModel(mode="hard"))
    assert len(build.network.arcs) == 2
    pairs = {build.pair_of_arc(a) for a in build.network.arcs}
    assert pairs == {("l1", "r1"), ("l2", "r2")}


def test_isolated_nodes_flagged():
    left, right = _two_by_two(("a", "b"), ("a", "a"))
    build = build_bipartite(left, right, CostModel(mode="hard"))
    assert build.isolated_left == ["l2"]
    assert build.isolated_right == []


def test_paper_scale_arc_count_formula():
    assert count_arcs(87_576, 4_605) == 403_287_480


def test_arc_count_equals_dense_minus_exclusions():
    import random

    rng = random.Random(5)
    for _ in range(10):
        n1, n2 = rng.randint(1, 6), rng.randint(1, 6)
        lcats = [rng.choice("ab") for _ in range(n1)]
        rcats = [rng.choice("ab") for _ in range(n2)]
        left = make_panel([(f"l{i}", 1, (lcats[i],), (0.0,), 1) for i in range(n1)])
        right = make_panel([(f"r{j}", 1, (rcats[j],), (0.0,), 1) for j in range(n2)])
        build = build_bipartite(left, right, CostModel(mode="hard"))
        exclusions = sum(1 for a in lcats for b in rcats if a != b)
        assert len(build.network.arcs) == count_arcs(n1, n2) - exclusions


def test_unquantized_panels_rejected():
    left = make_panel([("l1", 1, ("a",), (0.0,), 0)])
    right = make_panel([("r1", 1, ("a",), (0.0,), 1)])
    with pytest.raises(ValueError):
        build_bipartite(left, right, CostModel())


def test_arc_cap_enforced():
    left = make_panel([(f"l{i}", 1, ("a",), (0.0,), 1) for i in range(4)])
    right = make_panel([(f"r{j}", 1, ("a",), (0.0,), 1) for j in range(4)])
    with pytest.raises(CostOverflowError):
        build_bipartite(left, right, CostModel(), max_arcs=10)


def test_balancing_node_signs():
    # left surplus: dummy demands the difference, fed from the left side
    left = make_panel([("l1", 1, ("a",), (0.0,), 5)])
    right = make_panel([("r1", 1, ("a",), (0.0,), 3)])
    build = add_balancing_node(build_bipartite(left, right, CostModel()))
    net = build.network
    assert build.dummy_index == 2
    assert net.balances[2] == -2
    dummy_arcs = [a for a in net.arcs if a.head == 2]
    assert [a.tail for a in dummy_arcs] == [0]
    assert all(a.cost == 0 for a in dummy_arcs)
    assert sum(net.balances) == 0

    # right surplus: dummy supplies the difference into the right side
    build2 = add_balancing_node(
        build_bipartite(
            make_panel([("l1", 1, ("a",), (0.0,), 3)]),
            make_panel([("r1", 1, ("a",), (1.0,), 5)]),
            CostModel(),
        )
    )
    assert build2.network.balances[build2.dummy_index] == 2
    dummy_arcs2 = [a for a in build2.network.arcs if a.tail == build2.dummy_index]
    assert len(dummy_arcs2) == 1 and dummy_arcs2[0].head == 1
    assert all(a.cost == 0 for a in dummy_arcs2)

    # balanced: no dummy
    build3 = add_balancing_node(
        build_bipartite(
            make_panel([("l1", 1, ("a",), (0.0,), 4)]),
            make_panel([("r1", 1, ("a",), (0.0,), 4)]),
            CostModel(),
        )
    )
    assert build3.dummy_index is None


# --- pruning -------------------------------------------------------------------


def test_keep_k_cheapest():
    # second left node keeps every right covered so only the k-cheapest
    # rule is in play for left 0
    arcs = [CandidateArc(0, 0, 5), CandidateArc(0, 1, 1), CandidateArc(0, 2, 3)]
    cover = [CandidateArc(1, j, 0) for j in range(3)]
    kept = prune_edges(arcs + cover, n_left=2, n_right=3, k=2)
    assert sorted(a.cost for a in kept if a.left == 0) == [1, 3]


def test_orphan_restore_overrides_k_cheapest():
    # with a single left node, dropping an arc would orphan its right node,
    # so the restore rule brings the expensive arc back
    arcs = [CandidateArc(0, 0, 5), CandidateArc(0, 1, 1), CandidateArc(0, 2, 3)]
    kept = prune_edges(arcs, n_left=1, n_right=3, k=2)
    assert sorted(a.cost for a in kept) == [1, 3, 5]


def test_orphaned_right_restored():
    # both left nodes prefer r0; r1 keeps its single cheapest arc
    arcs = [
        CandidateArc(0, 0, 1),
        CandidateArc(0, 1, 9),
        CandidateArc(1, 0, 2),
        CandidateArc(1, 1, 8),
    ]
    kept = prune_edges(arcs, n_left=2, n_right=2, k=1)
    assert CandidateArc(1, 1, 8) in kept
    assert len(kept) == 3


def test_k_at_least_n2_is_identity():
    arcs = [CandidateArc(i, j, i * 3 + j) for i in range(2) for j in range(3)]
    assert prune_edges(arcs, 2, 3, k=3) == sorted(arcs, key=lambda a: (a.left, a.right))


def test_tie_break_by_right_position():
    arcs = [CandidateArc(0, 2, 4), CandidateArc(0, 0, 4), CandidateArc(0, 1, 4)]
    cover = [CandidateArc(1, j, 0) for j in range(3)]
    kept = prune_edges(arcs + cover, 1 + 1, 3, k=2)
    assert [a.right for a in kept if a.left == 0] == [0, 1]


def test_prune_bound_and_degree_property():
    import random

    rng = random.Random(11)
    for _ in range(20):
        n1, n2, k = rng.randint(1, 8), rng.randint(1, 8), rng.randint(1, 4)
        arcs = [
            CandidateArc(i, j, rng.randint(0, 30))
            for i in range(n1)
            for j in range(n2)
            if rng.random() < 0.7
        ]
        kept = prune_edges(arcs, n1, n2, k) if arcs else []
        assert set(kept) <= set(arcs)
        assert len(kept) <= n1 * k + n2
        for side, n in ((0, n1), (1, n2)):
            had = {(a.left if side == 0 else a.right) for a in arcs}
            have = {(a.left if side == 0 else a.right) for a in kept}
            assert had == have  # degree >= 1 preserved wherever it was >= 1


def test_default_k_formula():
    assert default_prune_k(10, 10) == 16  # floor
    n = 87_576 + 4_605
    assert default_prune_k(87_576, 4_605) == max(16, math.ceil(2 * math.log2(n)))


def test_pruned_build_is_subnetwork():
    import random

    rng = random.Random(3)
    left = make_panel([(f"l{i}", 1, ("a",), (rng.random(),), 2) for i in range(12)])
    right = make_panel([(f"r{j}", 1, ("a",), (rng.random(),), 2) for j in range(8)])
    dense = build_bipartite(left, right, CostModel())
    pruned = build_bipartite(left, right, CostModel(), pruning=PruneConfig(enabled=True, k=2))
    dense_pairs = {(a.tail, a.head, a.cost) for a in dense.network.arcs}
    pruned_pairs = {(a.tail, a.head, a.cost) for a in pruned.network.arcs}
    assert pruned_pairs < dense_pairs
    assert pruned.pruned and not dense.pruned
