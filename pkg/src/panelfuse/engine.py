"""Fusion engines.

``fuse_single`` solves one bipartite transportation problem over the full
panels.  ``fuse_iterative`` partitions the panels by a shrinking subset of
categorical features, solves every cluster independently (optionally in
parallel worker processes), turns dummy-absorbed imbalance into residual
panelists, and relaxes the partition until everything is assigned.  The
final stage always runs unpartitioned, in soft cost mode, with splitting
allowed, which guarantees termination whenever both panels carry the same
unit total.

Every cluster solution is verified before its pairs are accepted; merges
are ordered by cluster key so results do not depend on worker scheduling.
"""

from __future__ import annotations

import logging
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .errors import AssignmentIntegrityError, InfeasibleFusionError
from .flow import solve_mcf, verify_solution
from .flow.solver import warmup
from .graph import (
    BuildResult,
    CostModel,
    PruneConfig,
    SOFT,
    add_balancing_node,
    build_bipartite,
)
from .panels import EngineConfig, Panel, Panelist

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssignmentPair:
    left_id: str
    right_id: str
    weight: float  # units de-quantized to universe persons
    units: int


@dataclass
class AssignmentSet:
    pairs: list[AssignmentPair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def total_units(self) -> int:
        return sum(p.units for p in self.pairs)

    def units_by_left(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for p in self.pairs:
            out[p.left_id] = out.get(p.left_id, 0) + p.units
        return out

    def units_by_right(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for p in self.pairs:
            out[p.right_id] = out.get(p.right_id, 0) + p.units
        return out


@dataclass(frozen=True)
class RelaxationSchedule:
    """Ordered partition-feature subsets; the last stage must be empty."""

    stages: tuple[tuple[str, ...], ...]

    @classmethod
    def from_lists(cls, stages) -> "RelaxationSchedule":
        return cls(stages=tuple(tuple(s) for s in stages))

    def validate(self, categorical_names: tuple[str, ...]) -> None:
        if not self.stages or self.stages[-1] != ():
            raise ValueError("schedule must end with the empty (no partitioning) stage")
        known = set(categorical_names)
        for i, stage in enumerate(self.stages):
            missing = [f for f in stage if f not in known]
            if missing:
                raise ValueError(f"stage {i + 1} uses unknown features {missing}")
            if len(set(stage)) != len(stage):
                raise ValueError(f"stage {i + 1} repeats a feature")


@dataclass
class StageStats:
    stage: int
    features: tuple[str, ...]
    clusters: int
    matched_left: int
    matched_right: int
    residual_left: int
    residual_right: int
    stage_cost: int
    elapsed_s: float
    pruned_fallbacks: int = 0


@dataclass
class IterationTrace:
    stages: list[StageStats] = field(default_factory=list)

    @property
    def total_cost(self) -> int:
        return sum(s.stage_cost for s in self.stages)


@dataclass
class Cluster:
    key: tuple[str, ...]
    left: Panel
    right: Panel


def _sub_panel(panel: Panel, members: list[Panelist]) -> Panel:
    return Panel(
        categorical_names=panel.categorical_names,
        real_names=panel.real_names,
        panelists=members,
        unit_scale=panel.unit_scale,
    )


def partition(
    left: Panel, right: Panel, p: tuple[str, ...]
) -> tuple[list[Cluster], list[Panelist], list[Panelist]]:
    """Group panelists by their value tuple on the features in ``p``.

    Keys present on only one side are deferred whole (those panelists
    re-enter at the next, more relaxed stage).  An empty ``p`` yields a
    single cluster holding everyone.
    """
    for name in p:
        if name not in left.categorical_names:
            raise ValueError(f"unknown partition feature {name!r}")
    idx = [left.categorical_names.index(name) for name in p]

    def group(panel: Panel) -> dict[tuple[str, ...], list[Panelist]]:
        out: dict[tuple[str, ...], list[Panelist]] = {}
        for member in panel.panelists:
            key = tuple(member.categorical[i] for i in idx)
            out.setdefault(key, []).append(member)
        return out

    lg, rg = group(left), group(right)
    clusters = [
        Cluster(key=key, left=_sub_panel(left, lg[key]), right=_sub_panel(right, rg[key]))
        for key in sorted(set(lg) & set(rg))
    ]
    deferred_left = [m for key in sorted(set(lg) - set(rg)) for m in lg[key]]
    deferred_right = [m for key in sorted(set(rg) - set(lg)) for m in rg[key]]
    return clusters, deferred_left, deferred_right


def balance_cluster(
    cluster: Cluster,
    model: CostModel,
    pruning: PruneConfig | None = None,
    max_arcs: int | None = None,
) -> BuildResult:
    """Build the cluster's network and absorb any imbalance in a dummy node."""
    build = build_bipartite(cluster.left, cluster.right, model, pruning, max_arcs=max_arcs)
    return add_balancing_node(build)


def _extract_annotated(solution, build: BuildResult, unit_scale: int):
    """(left_id, right_id, units, unit_cost) for every flow-carrying real arc."""
    out = []
    for arc, x in zip(build.network.arcs, solution.flows):
        if x == 0:
            continue
        ids = build.pair_of_arc(arc)
        if ids is None:
            continue
        out.append((ids[0], ids[1], int(x), arc.cost))
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def generate_assigned_pairs(solution, build: BuildResult, unit_scale: int) -> AssignmentSet:
    """Flows -> panel-level pairs: zero flows and dummy arcs dropped,
    units de-quantized to weights."""
    pairs = [
        AssignmentPair(left_id=l, right_id=r, weight=units / unit_scale, units=units)
        for l, r, units, _ in _extract_annotated(solution, build, unit_scale)
    ]
    return AssignmentSet(pairs=pairs)


def _apply_assignments(annotated, left: Panel, right: Panel, no_split: bool):
    """Subtract assigned units; returns (kept_pairs, residual_left, residual_right).

    With ``no_split`` a left panelist spread over several right partners has
    all of its assignments discarded and re-enters at full units.
    """
    left_units = {p.id: p.units for p in left.panelists}
    right_units = {p.id: p.units for p in right.panelists}

    if no_split:
        partner_count: dict[str, int] = {}
        for l, _r, _u, _c in annotated:
            partner_count[l] = partner_count.get(l, 0) + 1
        kept = [t for t in annotated if partner_count[t[0]] == 1]
    else:
        kept = list(annotated)

    assigned_l: dict[str, int] = {}
    assigned_r: dict[str, int] = {}
    for l, r, units, _c in kept:
        if l not in left_units or r not in right_units:
            raise AssignmentIntegrityError(f"assignment references unknown panelist {l!r}/{r!r}")
        assigned_l[l] = assigned_l.get(l, 0) + units
        assigned_r[r] = assigned_r.get(r, 0) + units
    for pid, total in assigned_l.items():
        if total > left_units[pid]:
            raise AssignmentIntegrityError(
                f"left panelist {pid!r} assigned {total} units but has {left_units[pid]}"
            )
    for pid, total in assigned_r.items():
        if total > right_units[pid]:
            raise AssignmentIntegrityError(
                f"right panelist {pid!r} assigned {total} units but has {right_units[pid]}"
            )

    scale = left.unit_scale or 1

    def residual(panel: Panel, assigned: dict[str, int]) -> Panel:
        members = []
        for p in panel.panelists:
            remaining = p.units - assigned.get(p.id, 0)
            if remaining > 0:
                members.append(replace(p, units=remaining, weight=remaining / scale))
        return _sub_panel(panel, members)

    return kept, residual(left, assigned_l), residual(right, assigned_r)


def update_residuals(
    assignments: AssignmentSet, left: Panel, right: Panel, no_split: bool = False
) -> tuple[Panel, Panel]:
    annotated = [(p.left_id, p.right_id, p.units, 0) for p in assignments.pairs]
    _, res_l, res_r = _apply_assignments(annotated, left, right, no_split)
    return res_l, res_r


def _imbalanced_blocks(left: Panel, right: Panel):
    """Unit totals per full categorical profile; returns the unequal ones."""
    totals: dict[tuple[str, ...], list[int]] = {}
    for p in left.panelists:
        totals.setdefault(p.categorical, [0, 0])[0] += p.units
    for p in right.panelists:
        totals.setdefault(p.categorical, [0, 0])[1] += p.units
    return [(key, lu, ru) for key, (lu, ru) in sorted(totals.items()) if lu != ru]


def _require_fusable(left: Panel, right: Panel) -> int:
    if left.unit_scale is None or right.unit_scale is None:
        raise ValueError("panels must be quantized before fusion (see quantize_weights)")
    if left.unit_scale != right.unit_scale:
        raise ValueError("panels quantized at different unit scales")
    if left.total_units != right.total_units:
        raise ValueError(
            f"panels do not represent the same universe in units: "
            f"{left.total_units} vs {right.total_units}"
        )
    return left.unit_scale


def fuse_single(
    left: Panel, right: Panel, model: CostModel, max_arcs: int | None = None
) -> tuple[AssignmentSet, int]:
    """One transportation solve over the full panels; exact optimum."""
    from .graph import normalize_features

    unit_scale = _require_fusable(left, right)
    norm_l, norm_r, _ = normalize_features(left, right)
    build = build_bipartite(norm_l, norm_r, model, pruning=None, max_arcs=max_arcs)
    if build.isolated_left or build.isolated_right:
        raise InfeasibleFusionError(
            "hard mode leaves panelists with no candidate partner",
            category_blocks=_imbalanced_blocks(norm_l, norm_r),
        )
    solution = solve_mcf(build.network)
    if not solution.is_optimal:
        raise InfeasibleFusionError(
            "no feasible assignment under the given cost mode",
            category_blocks=_imbalanced_blocks(norm_l, norm_r),
        )
    report = verify_solution(build.network, solution)
    if not report.passed:
        raise AssignmentIntegrityError(f"solver output failed verification: {report}")
    return generate_assigned_pairs(solution, build, unit_scale), solution.total_cost


@dataclass
class _ClusterOutcome:
    key: tuple[str, ...]
    annotated: list
    deferred_left: list[Panelist]
    deferred_right: list[Panelist]
    pruned_fallback: bool


def _solve_cluster(
    cluster: Cluster,
    model: CostModel,
    pruning: PruneConfig | None,
    unit_scale: int,
    max_arcs: int | None,
) -> _ClusterOutcome:
    """Build, balance, solve, and verify one cluster.

    Hard-mode isolated panelists are deferred to residual before the solve;
    an infeasible pruned network falls back to the unpruned one.
    """
    left, right = cluster.left, cluster.right
    deferred_l: list[Panelist] = []
    deferred_r: list[Panelist] = []

    build = build_bipartite(left, right, model, pruning, max_arcs=max_arcs)
    if build.isolated_left or build.isolated_right:
        iso_l, iso_r = set(build.isolated_left), set(build.isolated_right)
        deferred_l = [p for p in left.panelists if p.id in iso_l]
        deferred_r = [p for p in right.panelists if p.id in iso_r]
        left = _sub_panel(left, [p for p in left.panelists if p.id not in iso_l])
        right = _sub_panel(right, [p for p in right.panelists if p.id not in iso_r])
        if not left.panelists or not right.panelists:
            deferred_l.extend(left.panelists)
            deferred_r.extend(right.panelists)
            return _ClusterOutcome(cluster.key, [], deferred_l, deferred_r, False)
        build = build_bipartite(left, right, model, pruning, max_arcs=max_arcs)

    add_balancing_node(build)
    solution = solve_mcf(build.network)
    fallback = False
    if not solution.is_optimal and build.pruned:
        # Pruning is an optimization, never a correctness change: retry dense.
        fallback = True
        build = build_bipartite(left, right, model, pruning=None, max_arcs=max_arcs)
        add_balancing_node(build)
        solution = solve_mcf(build.network)
    if not solution.is_optimal:
        raise InfeasibleFusionError(
            f"cluster {cluster.key!r} has no feasible assignment",
            category_blocks=_imbalanced_blocks(left, right),
        )
    report = verify_solution(build.network, solution)
    if not report.passed:
        raise AssignmentIntegrityError(
            f"cluster {cluster.key!r} solution failed verification: {report}"
        )
    return _ClusterOutcome(
        cluster.key,
        _extract_annotated(solution, build, unit_scale),
        deferred_l,
        deferred_r,
        fallback,
    )


def _solve_cluster_task(args):
    return _solve_cluster(*args)


def _resolve_stage_models(stage_models, n_stages: int) -> list[CostModel]:
    if isinstance(stage_models, CostModel):
        models = [stage_models] * n_stages
    else:
        models = list(stage_models)
        if len(models) == 1:
            models = models * n_stages
    if len(models) != n_stages:
        raise ValueError(f"need one cost model or {n_stages}, got {len(models)}")
    # the final unpartitioned stage must stay feasible
    models[-1] = replace(models[-1], mode=SOFT)
    return models


def fuse_iterative(
    left: Panel,
    right: Panel,
    schedule: RelaxationSchedule,
    stage_models,
    pruning: PruneConfig | None = None,
    no_split: bool = False,
    workers: int = 1,
    max_arcs: int | None = None,
) -> tuple[AssignmentSet, IterationTrace]:
    """Partition / solve / merge / relax until both panels are fully assigned."""
    from .graph import normalize_features

    unit_scale = _require_fusable(left, right)
    schedule.validate(left.categorical_names)
    models = _resolve_stage_models(stage_models, len(schedule.stages))

    res_l, res_r, _ = normalize_features(left, right)
    merged: dict[tuple[str, str], list[int]] = {}
    trace = IterationTrace()

    pool = None
    if workers > 1:
        warmup()  # compile solver kernels before forking
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:  # pragma: no cover - non-POSIX fallback
            ctx = multiprocessing.get_context()
        pool = ProcessPoolExecutor(max_workers=workers, mp_context=ctx)

    try:
        for stage_idx, features in enumerate(schedule.stages):
            if not res_l.panelists and not res_r.panelists:
                break
            final = stage_idx == len(schedule.stages) - 1
            stage_no_split = no_split and not final
            model = models[stage_idx]
            started = time.perf_counter()

            clusters, _dl, _dr = partition(res_l, res_r, features)
            tasks = [(c, model, pruning, unit_scale, max_arcs) for c in clusters]
            if pool is not None and len(tasks) > 1:
                chunk = max(1, len(tasks) // (workers * 4))
                outcomes = list(pool.map(_solve_cluster_task, tasks, chunksize=chunk))
            else:
                outcomes = [_solve_cluster_task(t) for t in tasks]

            stage_annotated = [t for out in outcomes for t in out.annotated]
            kept, new_l, new_r = _apply_assignments(stage_annotated, res_l, res_r, stage_no_split)
            stage_cost = sum(units * cost for _l, _r, units, cost in kept)
            for l, r, units, cost in kept:
                entry = merged.setdefault((l, r), [0, 0])
                entry[0] += units
                entry[1] += units * cost

            stats = StageStats(
                stage=stage_idx + 1,
                features=features,
                clusters=len(clusters),
                matched_left=len(res_l.panelists) - len(new_l.panelists),
                matched_right=len(res_r.panelists) - len(new_r.panelists),
                residual_left=len(new_l.panelists),
                residual_right=len(new_r.panelists),
                stage_cost=stage_cost,
                elapsed_s=time.perf_counter() - started,
                pruned_fallbacks=sum(1 for out in outcomes if out.pruned_fallback),
            )
            trace.stages.append(stats)
            log.info(
                "stage %d (%s): %d clusters, matched %d/%d, residual %d/%d, cost %d, %.2fs",
                stats.stage,
                ",".join(features) if features else "no partitioning",
                stats.clusters,
                stats.matched_left,
                stats.matched_right,
                stats.residual_left,
                stats.residual_right,
                stats.stage_cost,
                stats.elapsed_s,
            )
            res_l, res_r = new_l, new_r
    finally:
        if pool is not None:
            pool.shutdown()

    if res_l.panelists or res_r.panelists:
        raise InfeasibleFusionError(
            f"{len(res_l.panelists)}/{len(res_r.panelists)} panelists left unassigned "
            "after the final stage"
        )

    pairs = [
        AssignmentPair(left_id=l, right_id=r, weight=units / unit_scale, units=units)
        for (l, r), (units, _cost) in sorted(merged.items())
    ]
    return AssignmentSet(pairs=pairs), trace


def run_fusion(
    left: Panel,
    right: Panel,
    config: EngineConfig,
    mode: str = "iterative",
    max_single_arcs: int | None = None,
):
    """Config-driven entry point shared by the CLI and the quality harness.

    Returns (assignments, total_cost, trace_or_None, wall_seconds).
    """
    from .panels import quantize_weights

    config.validate()
    started = time.perf_counter()
    ql, qr = quantize_weights(left, right, unit_scale=config.unit_scale)
    if mode == "single":
        model = CostModel(
            mode=config.stage_modes()[0], penalty=config.penalty, cost_scale=config.cost_scale
        )
        assignments, total_cost = fuse_single(ql, qr, model, max_arcs=max_single_arcs)
        trace = None
    elif mode == "iterative":
        schedule = RelaxationSchedule.from_lists(config.schedule)
        models = [
            CostModel(mode=m, penalty=config.penalty, cost_scale=config.cost_scale)
            for m in config.stage_modes()
        ]
        pruning = (
            PruneConfig(enabled=True, k=config.pruning.k) if config.pruning.enabled else None
        )
        assignments, trace = fuse_iterative(
            ql,
            qr,
            schedule,
            models,
            pruning=pruning,
            no_split=config.no_split,
            workers=config.workers,
        )
        total_cost = trace.total_cost
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    return assignments, total_cost, trace, time.perf_counter() - started
