"""Command line front end: ``ceqopt <command> <problem-file> [options]``."""

from __future__ import annotations

import argparse
import sys

from .expr import ExprError
from .matrix import DimensionError, MatrixTooLargeError
from .problem import ProblemError
from .problem_file import load_problem
from .report import COMMANDS, emit_report, run
from .solver import SolverConfig
from .taylor import ExpressionTooLargeError, NotOnCurveError

EXIT_OK, EXIT_INPUT, EXIT_NOTHING, EXIT_GUARD = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ceqopt",
                                 description="Stationary points of f under N-1 equality constraints.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("problem", help="problem file")
    ap.add_argument("--axis", default=None, help="variable name or 'all' (default: all)")
    ap.add_argument("--at", type=_floats, default=None, help='point "v1,v2,..." on the curve')
    ap.add_argument("--order", type=int, default=2, help="Taylor order (default 2)")
    ap.add_argument("--grid", type=int, default=7, help="grid starts per axis")
    ap.add_argument("--starts", type=int, default=50, help="extra seeded random starts")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-10, help="residual tolerance")
    ap.add_argument("--workers", type=int, default=1, help="threads for multistart")
    ap.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                    help="sampling range along --axis (sample)")
    ap.add_argument("--count", type=int, default=101, help="number of samples (sample)")
    ap.add_argument("--contour", type=int, default=0, help="contour grid size for N=2 (sample)")
    ap.add_argument("--timing", action="store_true", help="record wall times in the report")
    ap.add_argument("--json", metavar="PATH", help="write JSON report ('-' for stdout)")
    ap.add_argument("--csv", metavar="PATH", help="write CSV tables ('-' for stdout)")
    return ap


def _write(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def _summary(r) -> str:
    lines = [f"{r.command}: {', '.join(r.problem['names'])}; f = {r.problem['f']}"]
    for sp in r.stationary_points:
        lines.append(f"  stationary {tuple(sp['point'])}  f = {sp['f_value']:.12g}  [{sp['label']}]")
    for axis, b in sorted(r.boundaries.items()):
        if b["unbounded"]:
            lines.append(f"  boundary {axis}: unbounded")
        for bp in b["points"]:
            lines.append(f"  boundary {axis}: {tuple(bp['point'])}")
    for t in r.taylor:
        body = t.get("coefficients", t.get("error"))
        lines.append(f"  taylor {t['axis']} at {tuple(t['center'])}: {body}")
    for lp in r.cross_validation.get("lagrange_points", []):
        lines.append(f"  lagrange {tuple(lp['point'])}  lambda = {tuple(lp['multipliers'])}")
    if "agree" in r.cross_validation:
        lines.append(f"  methods agree: {r.cross_validation['agree']}")
    for msg in r.diagnostics.get("messages", []):
        lines.append(f"  warning: {msg}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        p = load_problem(args.problem)
        if args.axis in (None, "all"):
            axes = None
        else:
            axes = [p.index(args.axis)]
        if args.command == "sample" and axes is None:
            axes = [0]
        if args.at is not None and len(args.at) != p.n:
            raise ProblemError(f"--at needs {p.n} coordinates, got {len(args.at)}")
        if args.order < 0:
            raise ProblemError("--order must be non-negative")
        cfg = SolverConfig(box=p.search_box(), grid_per_axis=args.grid,
                           extra_random_starts=args.starts, rng_seed=args.seed,
                           residual_tol=args.tol, workers=args.workers)
        report = run(args.command, p, cfg, axes=axes, at=args.at, order=args.order,
                     sample_range=args.range, count=args.count, contour=args.contour,
                     timing=args.timing)
    except (MatrixTooLargeError, ExpressionTooLargeError) as exc:
        print(f"ceqopt: size guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ProblemError, ExprError, NotOnCurveError, DimensionError, ValueError) as exc:
        print(f"ceqopt: {exc}", file=sys.stderr)
        return EXIT_INPUT

    if args.json:
        _write(args.json, emit_report(report, "json"))
    if args.csv:
        _write(args.csv, emit_report(report, "csv"))
    if not args.json and not args.csv:
        if report.sample_csv is not None:
            sys.stdout.write(report.sample_csv.decode("utf-8"))
        else:
            sys.stdout.write(_summary(report))
    if not report.found:
        print("ceqopt: nothing found", file=sys.stderr)
        return EXIT_NOTHING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
