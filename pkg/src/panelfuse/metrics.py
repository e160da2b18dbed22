"""Fusion quality reports and the synthetic panel generator.

Reports keep exact integer counts plus rational shares; percent rendering
happens only at the text/JSON boundary.  "Same demo" means equality on
every categorical feature.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .engine import AssignmentSet, IterationTrace, run_fusion
from .errors import AssignmentIntegrityError
from .panels import Panel, Panelist


@dataclass
class FusionReport:
    assignment_count: int
    within_demo_count: int
    within_demo_units: int
    total_units: int
    total_cost: int | None = None
    wall_time_s: float | None = None
    trace: IterationTrace | None = None

    @property
    def across_demo_count(self) -> int:
        return self.assignment_count - self.within_demo_count

    @property
    def across_demo_units(self) -> int:
        return self.total_units - self.within_demo_units

    @property
    def within_count_share(self) -> Fraction:
        if self.assignment_count == 0:
            return Fraction(0)
        return Fraction(self.within_demo_count, self.assignment_count)

    @property
    def within_flow_share(self) -> Fraction:
        if self.total_units == 0:
            return Fraction(0)
        return Fraction(self.within_demo_units, self.total_units)


def _pct(x: Fraction) -> str:
    return f"{float(100 * x):.2f}%"


def fusion_report(
    assignments: AssignmentSet,
    left: Panel,
    right: Panel,
    total_cost: int | None = None,
    wall_time_s: float | None = None,
    trace: IterationTrace | None = None,
) -> FusionReport:
    left_profiles = {p.id: p.categorical for p in left.panelists}
    right_profiles = {p.id: p.categorical for p in right.panelists}
    within_count = 0
    within_units = 0
    total_units = 0
    for pair in assignments.pairs:
        try:
            same = left_profiles[pair.left_id] == right_profiles[pair.right_id]
        except KeyError as exc:
            raise AssignmentIntegrityError(f"assignment references unknown id {exc}") from None
        total_units += pair.units
        if same:
            within_count += 1
            within_units += pair.units
    return FusionReport(
        assignment_count=len(assignments.pairs),
        within_demo_count=within_count,
        within_demo_units=within_units,
        total_units=total_units,
        total_cost=total_cost,
        wall_time_s=wall_time_s,
        trace=trace,
    )


def render_report_text(report: FusionReport) -> str:
    rows = [
        ("Total assignments", f"{report.assignment_count:,}"),
        (
            "Assignments within same demo categories",
            f"{report.within_demo_count:,} ({_pct(report.within_count_share)})",
        ),
        (
            "Assignments across different demo categories",
            f"{report.across_demo_count:,} ({_pct(1 - report.within_count_share)})"
            if report.assignment_count
            else "0 (0.00%)",
        ),
        ("Flow assigned with same demo categories", _pct(report.within_flow_share)),
        (
            "Flow assigned across different demo categories",
            _pct(1 - report.within_flow_share) if report.total_units else "0.00%",
        ),
    ]
    if report.total_cost is not None:
        rows.insert(0, ("Cost", f"{report.total_cost:,}"))
    if report.wall_time_s is not None:
        rows.append(("End to end execution time", f"{report.wall_time_s:.1f}s"))
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label:<{width}}  {value}" for label, value in rows)


def report_to_dict(report: FusionReport) -> dict:
    out = {
        "assignment_count": report.assignment_count,
        "within_demo_count": report.within_demo_count,
        "across_demo_count": report.across_demo_count,
        "within_demo_units": report.within_demo_units,
        "across_demo_units": report.across_demo_units,
        "total_units": report.total_units,
        "within_count_pct": _pct(report.within_count_share),
        "within_flow_pct": _pct(report.within_flow_share),
    }
    if report.total_cost is not None:
        out["total_cost"] = report.total_cost
    if report.wall_time_s is not None:
        out["wall_time_s"] = round(report.wall_time_s, 3)
    if report.trace is not None:
        out["stages"] = [
            {
                "stage": s.stage,
                "features": list(s.features),
                "clusters": s.clusters,
                "matched_left": s.matched_left,
                "matched_right": s.matched_right,
                "residual_left": s.residual_left,
                "residual_right": s.residual_right,
                "stage_cost": s.stage_cost,
                "elapsed_s": round(s.elapsed_s, 3),
            }
            for s in report.trace.stages
        ]
    return out


def trace_to_csv(trace: IterationTrace) -> str:
    lines = [
        "stage,features,clusters,matched_left,matched_right,"
        "residual_left,residual_right,stage_cost,elapsed_s"
    ]
    for s in trace.stages:
        features = "|".join(s.features)
        lines.append(
            f"{s.stage},{features},{s.clusters},{s.matched_left},{s.matched_right},"
            f"{s.residual_left},{s.residual_right},{s.stage_cost},{s.elapsed_s:.3f}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class SelfFusionReport:
    panelist_count: int
    self_units: int
    total_units: int
    fully_self_matched: int
    total_cost: int

    @property
    def self_flow_share(self) -> Fraction:
        if self.total_units == 0:
            return Fraction(0)
        return Fraction(self.self_units, self.total_units)

    @property
    def fully_self_share(self) -> Fraction:
        if self.panelist_count == 0:
            return Fraction(0)
        return Fraction(self.fully_self_matched, self.panelist_count)


def self_fusion_quality(panel: Panel, config) -> SelfFusionReport:
    """Fuse a panel against a copy of itself and measure self-assignment."""
    import copy

    mirror = copy.deepcopy(panel)
    assignments, total_cost, _trace, _t = run_fusion(panel, mirror, config, mode="iterative")
    # run_fusion re-quantizes, so read actual unit totals off the output
    by_left: dict[str, int] = {}
    self_units_by_id: dict[str, int] = {}
    total_units = 0
    self_units = 0
    for pair in assignments.pairs:
        total_units += pair.units
        by_left[pair.left_id] = by_left.get(pair.left_id, 0) + pair.units
        if pair.left_id == pair.right_id:
            self_units += pair.units
            self_units_by_id[pair.left_id] = self_units_by_id.get(pair.left_id, 0) + pair.units
    fully_self = sum(
        1 for pid, total in by_left.items() if self_units_by_id.get(pid, 0) == total
    )
    return SelfFusionReport(
        panelist_count=len(panel.panelists),
        self_units=self_units,
        total_units=total_units,
        fully_self_matched=fully_self,
        total_cost=total_cost,
    )


def render_self_report_text(report: SelfFusionReport) -> str:
    rows = [
        ("Number of panelists", f"{report.panelist_count:,}"),
        (
            "Same panelist matches",
            f"{_pct(report.self_flow_share)} of flow, "
            f"{report.fully_self_matched:,} fully self-matched "
            f"({_pct(report.fully_self_share)})",
        ),
        ("Different panelist matches", _pct(1 - report.self_flow_share)),
        ("Total cost", f"{report.total_cost:,}"),
    ]
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label:<{width}}  {value}" for label, value in rows)


# --- synthetic panels ----------------------------------------------------------

DEFAULT_CATEGORICAL_SPEC = {
    "age": {"18-24": 0.15, "25-34": 0.2, "35-44": 0.2, "45-54": 0.18, "55-64": 0.15, "65+": 0.12},
    "gender": {"F": 0.51, "M": 0.49},
    "income": {"low": 0.3, "mid": 0.45, "high": 0.25},
    "children": {"yes": 0.35, "no": 0.65},
}

DEFAULT_REAL_SPEC = {
    "minutes_social": (3.0, 0.8),
    "minutes_news": (2.2, 0.9),
    "minutes_video": (3.4, 0.7),
}


def _category_shift(seed: int, feature: str, combo: tuple[str, ...]) -> float:
    """Deterministic per-(feature, demo combo) lognormal mean shift."""
    rng = random.Random(f"{seed}:{feature}:{'|'.join(combo)}")
    return rng.uniform(-0.6, 0.6)


def synth_panel(
    n: int,
    universe_total: float,
    seed: int,
    id_prefix: str = "P",
    categorical_spec: dict | None = None,
    real_spec: dict | None = None,
    duplicate_fraction: float = 0.0,
) -> Panel:
    """Seeded panel with category-correlated behavior and exact weight totals.

    Weights are drawn lognormally and scaled so the panel sums to
    ``universe_total`` exactly at milli-person resolution (largest-weight
    panelist absorbs the rounding drift).  ``duplicate_fraction`` makes that
    share of panelists members of identical-feature pairs, for match-quality
    experiments.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if universe_total <= 0:
        raise ValueError("universe_total must be positive")
    cat_spec = categorical_spec or DEFAULT_CATEGORICAL_SPEC
    real_spec = real_spec or DEFAULT_REAL_SPEC
    for name, dist in cat_spec.items():
        if not dist or any(w < 0 for w in dist.values()):
            raise ValueError(f"invalid categorical spec for {name!r}")
    for name, params in real_spec.items():
        if len(params) != 2 or params[1] < 0:
            raise ValueError(f"invalid real spec for {name!r}")

    rng = random.Random(seed)
    cat_names = tuple(cat_spec)
    real_names = tuple(real_spec)

    raw_weights = [rng.lognormvariate(0.0, 0.5) for _ in range(n)]
    total_raw = sum(raw_weights)
    universe_milli = round(universe_total * 1000)
    milli = [max(1, round(w / total_raw * universe_milli)) for w in raw_weights]
    drift = sum(milli) - universe_milli
    if drift != 0:
        k = min(range(n), key=lambda i: (-milli[i], i))
        if milli[k] - drift < 1:
            raise ValueError("universe too small for this panel size")
        milli[k] -= drift

    cats: list[tuple[str, ...]] = []
    for _ in range(n):
        combo = tuple(
            rng.choices(list(dist.keys()), weights=list(dist.values()))[0]
            for dist in cat_spec.values()
        )
        cats.append(combo)

    reals: list[tuple[float, ...]] = []
    for i in range(n):
        row = []
        for name in real_names:
            mu, sigma = real_spec[name]
            row.append(rng.lognormvariate(mu + _category_shift(seed, name, cats[i]), sigma))
        reals.append(tuple(row))

    if duplicate_fraction > 0:
        m = int(round(n * duplicate_fraction))
        m -= m % 2  # whole pairs only
        if m >= 2:
            chosen = rng.sample(range(n), m)
            # pair heaviest with lightest so paired unit totals differ and
            # cross-assignment within a pair can never move all of its flow
            chosen.sort(key=lambda i: milli[i])
            half = m // 2
            for a, b in zip(chosen[:half], reversed(chosen[half:])):
                cats[b] = cats[a]
                reals[b] = reals[a]

    width = len(str(n))
    panel = Panel(categorical_names=cat_names, real_names=real_names)
    for i in range(n):
        panel.panelists.append(
            Panelist(
                id=f"{id_prefix}{i + 1:0{width}d}",
                weight=milli[i] / 1000,
                units=0,
                categorical=cats[i],
                real=reals[i],
            )
        )
    return panel


def synth_panels(
    n1: int,
    n2: int,
    universe_total: float,
    seed: int,
    categorical_spec: dict | None = None,
    real_spec: dict | None = None,
) -> tuple[Panel, Panel]:
    """Two disjoint panels over the same universe total (the larger panel as
    'census'-like left side, the smaller as traditional right side)."""
    left = synth_panel(
        n1,
        universe_total,
        seed=seed * 2 + 1,
        id_prefix="L",
        categorical_spec=categorical_spec,
        real_spec=real_spec,
    )
    right = synth_panel(
        n2,
        universe_total,
        seed=seed * 2 + 2,
        id_prefix="R",
        categorical_spec=categorical_spec,
        real_spec=real_spec,
    )
    return left, right
