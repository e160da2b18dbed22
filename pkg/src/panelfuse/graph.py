"""Bipartite graph construction: feature normalization, costs, edge pruning.

Arc cost between two panelists is the squared L2 distance over the
normalized real features, scaled to an integer by ``cost_scale``.
Categorical features act either as a hard filter (any mismatch removes
the arc) or as an additive per-mismatch penalty in integer cost units.

The vectorized and scalar paths share one kernel so costs are
bit-identical everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CostOverflowError, SchemaMismatchError
from .flow.network import INT64_SAFE, Arc, FlowNetwork
from .panels import Panel, Panelist

HARD = "hard"
SOFT = "soft"


@dataclass(frozen=True)
class CostModel:
    mode: str = SOFT
    penalty: int = 1000  # per mismatched categorical feature (soft mode)
    cost_scale: int = 10**6

    def __post_init__(self):
        if self.mode not in (HARD, SOFT):
            raise ValueError(f"unknown cost mode {self.mode!r}")
        if self.cost_scale < 1:
            raise ValueError("cost_scale must be >= 1")
        if self.penalty < 0:
            raise ValueError("penalty must be >= 0")


@dataclass(frozen=True)
class FeatureSchema:
    """Feature layout plus the min/max ranges used for normalization."""

    categorical_names: tuple[str, ...]
    real_names: tuple[str, ...]
    real_ranges: tuple[tuple[float, float], ...]  # observed (min, max) per real feature


def normalize_features(left: Panel, right: Panel) -> tuple[Panel, Panel, FeatureSchema]:
    """Min-max scale each real feature to [0,1] over the union of both panels.

    Constant features map to 0.  Categorical values pass through unchanged.
    """
    if left.feature_names() != right.feature_names():
        raise SchemaMismatchError(
            f"panels disagree on features: {left.feature_names()} vs {right.feature_names()}"
        )
    names = left.real_names
    ranges = []
    for k in range(len(names)):
        values = [p.real[k] for p in left.panelists] + [p.real[k] for p in right.panelists]
        if not values:
            ranges.append((0.0, 0.0))
        else:
            ranges.append((min(values), max(values)))
    schema = FeatureSchema(
        categorical_names=left.categorical_names,
        real_names=names,
        real_ranges=tuple(ranges),
    )

    def transform(panel: Panel) -> Panel:
        out = Panel(
            categorical_names=panel.categorical_names,
            real_names=panel.real_names,
            unit_scale=panel.unit_scale,
        )
        for p in panel.panelists:
            scaled = []
            for k, v in enumerate(p.real):
                lo, hi = ranges[k]
                scaled.append(0.0 if hi == lo else (v - lo) / (hi - lo))
            out.panelists.append(
                Panelist(id=p.id, weight=p.weight, units=p.units, categorical=p.categorical, real=tuple(scaled))
            )
        return out

    return transform(left), transform(right), schema


def _cost_kernel(
    left_real: np.ndarray,
    right_real: np.ndarray,
    left_cat: np.ndarray,
    right_cat: np.ndarray,
    model: CostModel,
) -> tuple[np.ndarray, np.ndarray]:
    """(cost, excluded) matrices; accumulation order fixed for reproducibility."""
    n_l, n_r = left_real.shape[0], right_real.shape[0]
    acc = np.zeros((n_l, n_r), dtype=np.float64)
    for k in range(left_real.shape[1]):
        diff = left_real[:, k : k + 1] - right_real[np.newaxis, :, k]
        acc += diff * diff
    mismatches = np.zeros((n_l, n_r), dtype=np.int64)
    for k in range(left_cat.shape[1]):
        mismatches += left_cat[:, k : k + 1] != right_cat[np.newaxis, :, k]
    cost = np.rint(model.cost_scale * acc).astype(np.int64)
    if model.mode == HARD:
        return cost, mismatches > 0
    return cost + model.penalty * mismatches, np.zeros((n_l, n_r), dtype=bool)


def _encode_cats(members: list[Panelist], codes: dict, n_cat: int) -> np.ndarray:
    out = np.empty((len(members), n_cat), dtype=np.int64)
    for i, p in enumerate(members):
        for k, v in enumerate(p.categorical):
            out[i, k] = codes.setdefault((k, v), len(codes))
    return out


def _member_arrays(left, right):
    probe = left[0] if left else (right[0] if right else None)
    n_real = len(probe.real) if probe else 0
    n_cat = len(probe.categorical) if probe else 0
    lr = np.array([p.real for p in left], dtype=np.float64).reshape(len(left), n_real)
    rr = np.array([p.real for p in right], dtype=np.float64).reshape(len(right), n_real)
    codes: dict = {}
    lc = _encode_cats(left, codes, n_cat)
    rc = _encode_cats(right, codes, n_cat)
    return lr, rr, lc, rc


def distance(z_i: Panelist, z_j: Panelist, model: CostModel) -> int | None:
    """Integer arc cost between two (already normalized) panelists.

    Returns None when hard mode excludes the pair.
    """
    lr, rr, lc, rc = _member_arrays([z_i], [z_j])
    cost, excluded = _cost_kernel(lr, rr, lc, rc, model)
    if excluded[0, 0]:
        return None
    return int(cost[0, 0])


@dataclass(frozen=True)
class PruneConfig:
    enabled: bool = True
    k: int | None = None  # None: size-derived default

    def resolve_k(self, n_left: int, n_right: int) -> int:
        if self.k is not None:
            return max(1, self.k)
        return default_prune_k(n_left, n_right)


def default_prune_k(n_left: int, n_right: int) -> int:
    """Per-left-node arc budget: a floor of 16, else ~2*log2 of the node count."""
    n = max(2, n_left + n_right)
    return max(16, math.ceil(2 * math.log2(n)))


@dataclass(frozen=True)
class CandidateArc:
    left: int  # position on the left side
    right: int  # position on the right side
    cost: int


def _prune_mask(
    left_idx: np.ndarray,
    right_idx: np.ndarray,
    cost: np.ndarray,
    n_left: int,
    n_right: int,
    k: int,
) -> np.ndarray:
    """Keep the k cheapest arcs per left node (ties by right position),
    then restore the single cheapest arc of any right node left with none."""
    keep = np.zeros(len(cost), dtype=bool)
    order = np.lexsort((right_idx, cost, left_idx))  # by left, then cost, then right
    sorted_left = left_idx[order]
    # rank within each left group
    boundaries = np.flatnonzero(np.diff(sorted_left)) + 1
    starts = np.concatenate(([0], boundaries))
    group_start = np.repeat(starts, np.diff(np.concatenate((starts, [len(order)]))))
    ranks = np.arange(len(order)) - group_start
    keep[order[ranks < k]] = True

    covered = np.zeros(n_right, dtype=bool)
    covered[right_idx[keep]] = True
    orphan = ~covered
    if orphan.any():
        # cheapest arc per orphaned right node, ties by left position
        order_r = np.lexsort((left_idx, cost, right_idx))
        sorted_right = right_idx[order_r]
        first_of_group = np.ones(len(order_r), dtype=bool)
        first_of_group[1:] = sorted_right[1:] != sorted_right[:-1]
        for e in order_r[first_of_group]:
            if orphan[right_idx[e]]:
                keep[e] = True
    return keep


def prune_edges(candidates: list[CandidateArc], n_left: int, n_right: int, k: int) -> list[CandidateArc]:
    """Sparsify candidate arcs; result is sorted by (left, right) position."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not candidates:
        return []
    left_idx = np.array([c.left for c in candidates], dtype=np.int64)
    right_idx = np.array([c.right for c in candidates], dtype=np.int64)
    cost = np.array([c.cost for c in candidates], dtype=np.int64)
    keep = _prune_mask(left_idx, right_idx, cost, n_left, n_right, k)
    kept = [candidates[i] for i in np.flatnonzero(keep)]
    kept.sort(key=lambda c: (c.left, c.right))
    return kept


@dataclass
class BuildResult:
    """A bipartite network plus the id bookkeeping to read solutions back.

    Node order: left panelists ascending by id, then right panelists
    ascending by id, then (after balancing) an optional dummy node.
    """

    network: FlowNetwork
    left_ids: list[str]
    right_ids: list[str]
    left_units: list[int]
    right_units: list[int]
    isolated_left: list[str] = field(default_factory=list)
    isolated_right: list[str] = field(default_factory=list)
    dummy_index: int | None = None
    pruned: bool = False

    @property
    def n_left(self) -> int:
        return len(self.left_ids)

    def pair_of_arc(self, arc: Arc) -> tuple[str, str] | None:
        """(left_id, right_id) for a real arc, None for dummy arcs."""
        if self.dummy_index is not None and (
            arc.tail == self.dummy_index or arc.head == self.dummy_index
        ):
            return None
        if arc.tail < self.n_left:
            return self.left_ids[arc.tail], self.right_ids[arc.head - self.n_left]
        return self.left_ids[arc.head], self.right_ids[arc.tail - self.n_left]


_CHUNK_ROWS = 2048


def count_arcs(n_left: int, n_right: int) -> int:
    """Soft-mode (dense) arc count; the hard-mode count subtracts exclusions."""
    return n_left * n_right


def build_bipartite(
    left: Panel,
    right: Panel,
    model: CostModel,
    pruning: PruneConfig | None = None,
    max_arcs: int | None = None,
) -> BuildResult:
    """Supply/demand network over two quantized panels, costs per ``model``.

    Panelists are ordered ascending by id on both sides; arcs come out
    sorted by (left, right) position.  Hard-mode exclusions may isolate
    nodes; they are flagged in the result rather than raised, so callers
    can defer those panelists.
    """
    lm = sorted(left.panelists, key=lambda p: p.id)
    rm = sorted(right.panelists, key=lambda p: p.id)
    for p in lm + rm:
        if p.units < 1:
            raise ValueError(f"panelist {p.id!r} has no units; quantize panels first")

    n_l, n_r = len(lm), len(rm)
    do_prune = pruning is not None and pruning.enabled and n_l and n_r
    if not do_prune and max_arcs is not None and count_arcs(n_l, n_r) > max_arcs:
        raise CostOverflowError(
            f"unpruned graph would have {count_arcs(n_l, n_r)} arcs (cap {max_arcs}); enable pruning"
        )
    lr, rr, lc, rc = _member_arrays(lm, rm)
    k = pruning.resolve_k(n_l, n_r) if do_prune else 0

    lefts: list[np.ndarray] = []
    rights: list[np.ndarray] = []
    costs: list[np.ndarray] = []
    for start in range(0, n_l, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n_l)
        cost, excluded = _cost_kernel(lr[start:stop], rr, lc[start:stop], rc, model)
        li, ri = np.nonzero(~excluded)
        lefts.append((li + start).astype(np.int64))
        rights.append(ri.astype(np.int64))
        costs.append(cost[li, ri])

    left_idx = np.concatenate(lefts) if lefts else np.empty(0, dtype=np.int64)
    right_idx = np.concatenate(rights) if rights else np.empty(0, dtype=np.int64)
    cost_arr = np.concatenate(costs) if costs else np.empty(0, dtype=np.int64)

    pruned = False
    if do_prune and len(cost_arr) and k < n_r:
        keep = _prune_mask(left_idx, right_idx, cost_arr, n_l, n_r, k)
        if not keep.all():
            left_idx, right_idx, cost_arr = left_idx[keep], right_idx[keep], cost_arr[keep]
            pruned = True

    total_units = max(sum(p.units for p in lm), sum(p.units for p in rm))
    max_cost = int(cost_arr.max()) if len(cost_arr) else 0
    if max_cost * max(total_units, 1) >= INT64_SAFE:
        raise CostOverflowError(
            f"max arc cost {max_cost} x supply {total_units} exceeds the 64-bit budget; "
            "lower cost_scale or unit_scale"
        )

    node_ids = [f"L:{p.id}" for p in lm] + [f"R:{p.id}" for p in rm]
    balances = [p.units for p in lm] + [-p.units for p in rm]
    network = FlowNetwork(node_ids=node_ids, balances=balances)
    network.arcs = [
        Arc(tail=int(li), head=n_l + int(ri), cost=int(c))
        for li, ri, c in zip(left_idx, right_idx, cost_arr)
    ]

    left_degree = np.zeros(n_l, dtype=np.int64)
    right_degree = np.zeros(n_r, dtype=np.int64)
    if len(left_idx):
        np.add.at(left_degree, left_idx, 1)
        np.add.at(right_degree, right_idx, 1)
    return BuildResult(
        network=network,
        left_ids=[p.id for p in lm],
        right_ids=[p.id for p in rm],
        left_units=[p.units for p in lm],
        right_units=[p.units for p in rm],
        isolated_left=[lm[i].id for i in range(n_l) if left_degree[i] == 0],
        isolated_right=[rm[j].id for j in range(n_r) if right_degree[j] == 0],
        pruned=pruned,
    )


DUMMY_NODE_ID = "dummy:balance"


def add_balancing_node(build: BuildResult) -> BuildResult:
    """Append a dummy node absorbing the supply/demand imbalance.

    The imbalance w = left units - right units becomes a demand node when
    positive and a supply node when negative, wired to every node on the
    opposite side with cost 0 so the solver offloads whatever would be
    most expensive to match for real.
    """
    if build.dummy_index is not None:
        raise ValueError("network already balanced")
    net = build.network
    w = sum(build.left_units) - sum(build.right_units)
    if w == 0:
        return build
    dummy = net.n_nodes
    net.node_ids.append(DUMMY_NODE_ID)
    net.balances.append(-w)
    n_l = build.n_left
    if w > 0:
        # surplus on the left: dummy is a demand node fed by every left node
        for i in range(n_l):
            net.arcs.append(Arc(tail=i, head=dummy, cost=0))
    else:
        for j in range(len(build.right_ids)):
            net.arcs.append(Arc(tail=dummy, head=n_l + j, cost=0))
    build.dummy_index = dummy
    return build
