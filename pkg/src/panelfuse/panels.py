"""Panel datasets: CSV ingestion, validation, weight quantization, assignment I/O.

Panel CSV contract:
    header  ``id,weight,cat:<name>[,cat:<name>...],num:<name>[,num:<name>...]``
    one row per panelist; ``cat:`` columns hold opaque category codes,
    ``num:`` columns decimal numbers.  UTF-8 throughout.

Assignment CSV contract:
    header  ``left_id,right_id,weight,units``
    rows sorted ascending by (left_id, right_id).

Weights are positive reals (universe persons).  Quantization converts them
to integer units at ``unit_scale`` units per person, absorbing rounding
drift in the largest-weight panelist so both panels' unit totals match
exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    ConfigError,
    PanelFormatError,
    QuantizationError,
    UniverseMismatchError,
)

DEFAULT_UNIT_SCALE = 1000
DEFAULT_COST_SCALE = 10**6
DEFAULT_PENALTY = 1000
DEFAULT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Panelist:
    id: str
    weight: float
    units: int  # 0 until quantization
    categorical: tuple[str, ...]
    real: tuple[float, ...]


@dataclass
class Panel:
    categorical_names: tuple[str, ...]
    real_names: tuple[str, ...]
    panelists: list[Panelist] = field(default_factory=list)
    unit_scale: int | None = None  # set by quantize_weights

    def __len__(self) -> int:
        return len(self.panelists)

    @property
    def total_weight(self) -> float:
        return sum(p.weight for p in self.panelists)

    @property
    def total_units(self) -> int:
        return sum(p.units for p in self.panelists)

    def feature_names(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return self.categorical_names, self.real_names


def _parse_header(header: list[str], path) -> tuple[tuple[str, ...], tuple[str, ...]]:
    if len(header) < 2 or header[0] != "id" or header[1] != "weight":
        raise PanelFormatError(f"{path}: header must start with 'id,weight'")
    cats: list[str] = []
    nums: list[str] = []
    for col in header[2:]:
        if col.startswith("cat:"):
            if nums:
                raise PanelFormatError(f"{path}: cat: column {col!r} after num: columns")
            cats.append(col[4:])
        elif col.startswith("num:"):
            nums.append(col[4:])
        else:
            raise PanelFormatError(f"{path}: unknown column {col!r} (expected cat:/num: prefix)")
    names = cats + nums
    if len(set(names)) != len(names):
        raise PanelFormatError(f"{path}: duplicate feature names in header")
    return tuple(cats), tuple(nums)


def load_panel(path) -> Panel:
    """Read and validate a panel CSV; errors name the offending row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        cats, nums = _parse_header(header, path)
        n_cols = 2 + len(cats) + len(nums)
        panel = Panel(categorical_names=cats, real_names=nums)
        seen: set[str] = set()
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise PanelFormatError(
                    f"{path}: row {row_no}: expected {n_cols} fields, got {len(row)}"
                )
            pid = row[0]
            if pid in seen:
                raise PanelFormatError(f"{path}: row {row_no}: duplicate id {pid!r}")
            seen.add(pid)
            try:
                weight = float(row[1])
            except ValueError:
                raise PanelFormatError(
                    f"{path}: row {row_no}: non-numeric weight {row[1]!r}"
                ) from None
            if not weight > 0:
                raise PanelFormatError(
                    f"{path}: row {row_no}: non-positive weight {row[1]!r}"
                )
            cat_vals = tuple(row[2 : 2 + len(cats)])
            real_vals = []
            for k, raw in enumerate(row[2 + len(cats) :]):
                try:
                    real_vals.append(float(raw))
                except ValueError:
                    raise PanelFormatError(
                        f"{path}: row {row_no}: non-numeric value {raw!r} "
                        f"for feature {nums[k]!r}"
                    ) from None
            panel.panelists.append(
                Panelist(id=pid, weight=weight, units=0, categorical=cat_vals, real=tuple(real_vals))
            )
    return panel


def write_panel(panel: Panel, path) -> None:
    path = Path(path)
    header = ["id", "weight"]
    header += [f"cat:{n}" for n in panel.categorical_names]
    header += [f"num:{n}" for n in panel.real_names]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p in panel.panelists:
            writer.writerow([p.id, repr(p.weight), *p.categorical, *[repr(v) for v in p.real]])


def quantize_weights(
    left: Panel,
    right: Panel,
    unit_scale: int = DEFAULT_UNIT_SCALE,
    tolerance: float = DEFAULT_TOLERANCE,
) -> tuple[Panel, Panel]:
    """Convert weights to integer units with exactly equal totals per side.

    Each panelist gets ``round(weight * unit_scale)`` units (minimum 1);
    per-side rounding drift is absorbed by the largest-weight panelist
    (ties by id) of the side with more units, pulling both totals down to
    the smaller one.
    """
    if unit_scale < 1:
        raise QuantizationError(f"unit_scale must be >= 1, got {unit_scale}")
    lt, rt = left.total_weight, right.total_weight
    denom = max(abs(lt), abs(rt), 1e-300)
    if abs(lt - rt) / denom > tolerance:
        raise UniverseMismatchError(lt, rt, tolerance)

    def base_units(panel: Panel) -> list[int]:
        return [max(1, round(p.weight * unit_scale)) for p in panel.panelists]

    lu, ru = base_units(left), base_units(right)
    target = min(sum(lu), sum(ru))

    def absorb(panel: Panel, units: list[int]) -> list[int]:
        drift = sum(units) - target
        if drift == 0:
            return units
        # largest weight, ties by ascending id
        k = min(range(len(panel.panelists)), key=lambda i: (-panel.panelists[i].weight, panel.panelists[i].id))
        if units[k] - drift < 1:
            raise QuantizationError(
                f"cannot absorb rounding drift of {drift} units; "
                f"largest panelist {panel.panelists[k].id!r} has only {units[k]} units"
            )
        units = list(units)
        units[k] -= drift
        return units

    lu, ru = absorb(left, lu), absorb(right, ru)

    def apply(panel: Panel, units: list[int]) -> Panel:
        out = Panel(
            categorical_names=panel.categorical_names,
            real_names=panel.real_names,
            unit_scale=unit_scale,
        )
        out.panelists = [replace(p, units=u) for p, u in zip(panel.panelists, units)]
        return out

    return apply(left, lu), apply(right, ru)


# --- assignment I/O (the engine defines AssignmentSet; csv form lives here) ---

ASSIGNMENT_HEADER = ["left_id", "right_id", "weight", "units"]


def write_assignments(assignments, path) -> None:
    """Write pairs sorted by (left_id, right_id); see engine.AssignmentSet."""
    path = Path(path)
    rows = sorted(assignments.pairs, key=lambda p: (p.left_id, p.right_id))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ASSIGNMENT_HEADER)
        for p in rows:
            writer.writerow([p.left_id, p.right_id, repr(p.weight), p.units])


def read_assignments(path):
    from .engine import AssignmentPair, AssignmentSet

    path = Path(path)
    pairs = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        if header != ASSIGNMENT_HEADER:
            raise PanelFormatError(f"{path}: bad assignment header {header!r}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise PanelFormatError(f"{path}: row {row_no}: expected 4 fields")
            try:
                weight = float(row[2])
                units = int(row[3])
            except ValueError:
                raise PanelFormatError(
                    f"{path}: row {row_no}: malformed flow fields {row[2]!r},{row[3]!r}"
                ) from None
            pairs.append(AssignmentPair(left_id=row[0], right_id=row[1], weight=weight, units=units))
    return AssignmentSet(pairs=pairs)


# --- engine configuration -----------------------------------------------------


@dataclass
class PruneSettings:
    enabled: bool = True
    k: int | None = None  # None = size-derived default


@dataclass
class EngineConfig:
    """JSON-backed knobs for the fusion pipeline."""

    unit_scale: int = DEFAULT_UNIT_SCALE
    cost_scale: int = DEFAULT_COST_SCALE
    penalty: int = DEFAULT_PENALTY
    mode_per_stage: list[str] | str = "soft"
    schedule: list[list[str]] = field(default_factory=lambda: [[]])
    pruning: PruneSettings = field(default_factory=PruneSettings)
    no_split: bool = False
    workers: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.unit_scale < 1:
            raise ConfigError("unit_scale must be >= 1")
        if self.cost_scale < 1:
            raise ConfigError("cost_scale must be >= 1")
        if self.penalty < 0:
            raise ConfigError("penalty must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.schedule or self.schedule[-1] != []:
            raise ConfigError("schedule must end with the empty stage []")
        modes = self.mode_per_stage
        if isinstance(modes, str):
            modes = [modes]
        for m in modes:
            if m not in ("hard", "soft"):
                raise ConfigError(f"unknown cost mode {m!r}")
        if isinstance(self.mode_per_stage, list) and len(self.mode_per_stage) not in (
            1,
            len(self.schedule),
        ):
            raise ConfigError("mode_per_stage must have one entry or one per stage")

    def stage_modes(self) -> list[str]:
        n = len(self.schedule)
        if isinstance(self.mode_per_stage, str):
            return [self.mode_per_stage] * n
        if len(self.mode_per_stage) == 1:
            return list(self.mode_per_stage) * n
        return list(self.mode_per_stage)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {
            "unit_scale",
            "cost_scale",
            "penalty",
            "mode_per_stage",
            "schedule",
            "pruning",
            "no_split",
            "workers",
            "seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "pruning" in kwargs:
            pr = kwargs["pruning"]
            if not isinstance(pr, dict) or set(pr) - {"enabled", "k"}:
                raise ConfigError("pruning must be an object with keys enabled/k")
            kwargs["pruning"] = PruneSettings(enabled=bool(pr.get("enabled", True)), k=pr.get("k"))
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "unit_scale": self.unit_scale,
            "cost_scale": self.cost_scale,
            "penalty": self.penalty,
            "mode_per_stage": self.mode_per_stage,
            "schedule": self.schedule,
            "pruning": {"enabled": self.pruning.enabled, "k": self.pruning.k},
            "no_split": self.no_split,
            "workers": self.workers,
            "seed": self.seed,
        }


def load_config(path) -> EngineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return EngineConfig.from_dict(data)
