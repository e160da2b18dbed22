"""Command-line surface: fuse, validate, report, selftest, synth.

Exit codes: 0 success, 1 validation failure, 2 infeasible instance,
3 I/O error, 64 usage error.  Stage progress goes to stderr; results to
files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .engine import run_fusion
from .errors import (
    ConfigError,
    CostOverflowError,
    InfeasibleFusionError,
    PanelFormatError,
    PanelFuseError,
    QuantizationError,
    SchemaMismatchError,
    UniverseMismatchError,
)
from .metrics import (
    fusion_report,
    render_report_text,
    render_self_report_text,
    report_to_dict,
    self_fusion_quality,
    synth_panel,
    synth_panels,
    trace_to_csv,
)
from .panels import (
    DEFAULT_TOLERANCE,
    load_config,
    load_panel,
    read_assignments,
    write_assignments,
    write_panel,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3
EXIT_USAGE = 64

DEFAULT_SINGLE_ARC_CAP = 10**9


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 64, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="panelfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fuse = sub.add_parser("fuse", help="match two panels and write assignments")
    fuse.add_argument("--left", required=True)
    fuse.add_argument("--right", required=True)
    fuse.add_argument("--config", required=True)
    fuse.add_argument("--mode", choices=["single", "iterative"], default="iterative")
    fuse.add_argument("--out", required=True)
    fuse.add_argument("--trace-out", help="write per-stage trace CSV here")
    fuse.add_argument(
        "--max-single-arcs",
        type=int,
        default=DEFAULT_SINGLE_ARC_CAP,
        help="refuse single-mode inputs whose dense graph exceeds this many arcs",
    )

    validate = sub.add_parser("validate", help="check panels and the universe totals")
    validate.add_argument("--left", required=True)
    validate.add_argument("--right", required=True)
    validate.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)

    report = sub.add_parser("report", help="quality metrics for an assignment file")
    report.add_argument("--assignments", required=True)
    report.add_argument("--left", required=True)
    report.add_argument("--right", required=True)
    report.add_argument("--json", action="store_true")

    selftest = sub.add_parser("selftest", help="fuse a panel with itself and report quality")
    selftest.add_argument("--panel", required=True)
    selftest.add_argument("--config", required=True)
    selftest.add_argument("--json", action="store_true")

    synth = sub.add_parser("synth", help="generate seeded synthetic panels")
    synth.add_argument("--n1", type=int, required=True)
    synth.add_argument("--n2", type=int)
    synth.add_argument("--universe", type=float, default=1_000_000.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--duplicate-fraction", type=float, default=0.0)
    synth.add_argument("--out-left", required=True)
    synth.add_argument("--out-right")
    return parser


def _cmd_fuse(args) -> int:
    config = load_config(args.config)
    left = load_panel(args.left)
    right = load_panel(args.right)
    if args.mode == "single":
        estimated = len(left) * len(right)
        if estimated > args.max_single_arcs:
            sys.stderr.write(
                f"single mode refused: ~{estimated:,} arcs exceeds cap "
                f"{args.max_single_arcs:,}; use --mode iterative\n"
            )
            return EXIT_VALIDATION
    assignments, total_cost, trace, wall = run_fusion(
        left, right, config, mode=args.mode, max_single_arcs=args.max_single_arcs
    )
    write_assignments(assignments, args.out)
    if args.trace_out and trace is not None:
        Path(args.trace_out).write_text(trace_to_csv(trace), encoding="utf-8")
    sys.stderr.write(
        f"fused {len(left):,} x {len(right):,} panelists: "
        f"{len(assignments):,} pairs, cost {total_cost:,}, {wall:.1f}s\n"
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    left = load_panel(args.left)
    right = load_panel(args.right)
    lt, rt = left.total_weight, right.total_weight
    print(f"left:  {len(left):,} panelists, total weight {lt!r}")
    print(f"right: {len(right):,} panelists, total weight {rt!r}")
    rel = abs(lt - rt) / max(abs(lt), abs(rt), 1e-300)
    if rel > args.tolerance:
        print(f"universe mismatch: relative difference {rel:.3e} > {args.tolerance:.3e}")
        return EXIT_VALIDATION
    print("universe check passed")
    return EXIT_OK


def _cmd_report(args) -> int:
    assignments = read_assignments(args.assignments)
    left = load_panel(args.left)
    right = load_panel(args.right)
    report = fusion_report(assignments, left, right)
    if args.json:
        print(json.dumps(report_to_dict(report), indent=2))
    else:
        print(render_report_text(report))
    return EXIT_OK


def _cmd_selftest(args) -> int:
    config = load_config(args.config)
    panel = load_panel(args.panel)
    report = self_fusion_quality(panel, config)
    if args.json:
        print(
            json.dumps(
                {
                    "panelist_count": report.panelist_count,
                    "self_flow_pct": f"{float(100 * report.self_flow_share):.2f}%",
                    "fully_self_matched": report.fully_self_matched,
                    "total_cost": report.total_cost,
                },
                indent=2,
            )
        )
    else:
        print(render_self_report_text(report))
    return EXIT_OK


def _cmd_synth(args) -> int:
    if (args.n2 is None) != (args.out_right is None):
        sys.stderr.write("--n2 and --out-right must be given together\n")
        return EXIT_USAGE
    if args.n2 is None:
        panel = synth_panel(
            args.n1,
            args.universe,
            seed=args.seed,
            duplicate_fraction=args.duplicate_fraction,
        )
        write_panel(panel, args.out_left)
        sys.stderr.write(f"wrote {args.out_left} ({args.n1:,} panelists)\n")
    else:
        left, right = synth_panels(args.n1, args.n2, args.universe, seed=args.seed)
        write_panel(left, args.out_left)
        write_panel(right, args.out_right)
        sys.stderr.write(
            f"wrote {args.out_left} ({args.n1:,}) and {args.out_right} ({args.n2:,})\n"
        )
    return EXIT_OK


_COMMANDS = {
    "fuse": _cmd_fuse,
    "validate": _cmd_validate,
    "report": _cmd_report,
    "selftest": _cmd_selftest,
    "synth": _cmd_synth,
}


def run(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except InfeasibleFusionError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        for profile, lu, ru in exc.category_blocks[:20]:
            sys.stderr.write(f"  block {profile}: left {lu} units vs right {ru}\n")
        return EXIT_INFEASIBLE
    except (UniverseMismatchError, QuantizationError, SchemaMismatchError) as exc:
        sys.stderr.write(f"validation failed: {exc}\n")
        return EXIT_VALIDATION
    except (PanelFormatError, ConfigError, CostOverflowError) as exc:
        sys.stderr.write(f"validation failed: {exc}\n")
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO
    except PanelFuseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
