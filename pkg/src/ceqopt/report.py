"""Run orchestration and deterministic JSON / CSV reports."""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import compile_exprs, eval_batch
from .lagrange import benchmark_methods, cross_validate, find_stationary_lagrange
from .problem import Problem
from .solver import SolverConfig, SolveStats, start_points
from .stationary import (
    StationaryPoint, Unbounded, degeneracy_diagnostics, find_boundaries, find_stationary,
)
from .taylor import (
    NotOnCurveError, SingularUnrecoverableError, curve_system, taylor_series, trace_curve,
)

COMMANDS = ("solve", "boundaries", "taylor", "lagrange", "compare", "sample", "all")
REPORT_KEYS = ("problem", "config", "stationary_points", "boundaries", "taylor",
               "cross_validation", "diagnostics", "timing_ms")


@dataclass
class RunReport:
    command: str
    problem: dict
    config: dict
    stationary_points: list = field(default_factory=list)
    boundaries: dict = field(default_factory=dict)
    taylor: list = field(default_factory=list)
    cross_validation: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    timing_ms: dict = field(default_factory=dict)
    found: bool = True
    sample_csv: bytes | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_KEYS}


# --- number formatting --------------------------------------------------------------

def fmt(v: float) -> str:
    """17 significant digits: re-parses to the same double."""
    return format(float(v), ".17g")


def _json(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True or obj is False:
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        import json
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",")
            _json(str(key), out)
            out.append(":")
            _json(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _json(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def to_json(obj) -> bytes:
    out: list[str] = []
    _json(obj, out)
    return ("".join(out) + "\n").encode("utf-8")


def _csv_rows(rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        if isinstance(row, str):
            buf.write(row + "\n")
        else:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode("utf-8")


def emit_report(r: RunReport, format: str = "json") -> bytes:
    if format == "json":
        return to_json(r.to_dict())
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    if r.sample_csv is not None:
        return r.sample_csv
    names = r.problem["names"]
    rows: list = ["# stationary_points", [*names, "f", "label"]]
    rows += [[*sp["point"], sp["f_value"], sp["label"]] for sp in r.stationary_points]
    rows += ["", "# boundaries", ["axis", *names]]
    for axis in sorted(r.boundaries):
        rows += [[axis, *bp["point"]] for bp in r.boundaries[axis]["points"]]
    rows += ["", "# taylor", ["axis", *[f"center_{n}" for n in names], "m", "coefficient"]]
    for t in r.taylor:
        rows += [[t["axis"], *t["center"], m, c] for m, c in enumerate(t.get("coefficients", []))]
    lag = r.cross_validation.get("lagrange_points")
    if lag is not None:
        m = len(names) - 1
        rows += ["", "# lagrange_points", [*names, *[f"lambda_{i + 1}" for i in range(m)]]]
        rows += [[*lp["point"], *lp["multipliers"]] for lp in lag]
    return _csv_rows(rows)


# --- serialisers for domain objects -----------------------------------------------

def _point(x) -> list:
    return [float(v) for v in x]


def _stationary(p: Problem, sp: StationaryPoint) -> dict:
    return {
        "point": _point(sp.point),
        "f_value": float(sp.f_value),
        "residuals": _point(sp.residuals),
        "label": sp.label,
        "axes": [{"axis": p.names[a.axis], "det_s": a.det_s, "valid": a.valid,
                  "d1": a.d1, "d2": a.d2} for a in sp.axes],
        "diagnostics": list(sp.diagnostics),
    }


def problem_dict(p: Problem) -> dict:
    return {
        "names": list(p.names),
        "f": p.text(p.f),
        "constraints": [{"g": p.text(g), "C": c} for g, c in p.constraints],
        "box": [list(b) for b in p.search_box()],
    }


# --- plot sampling ----------------------------------------------------------------

def _find_anchor(p: Problem, k: int, params: np.ndarray, box) -> tuple[int, np.ndarray] | None:
    cs = curve_system(p)
    mid = 0.5 * (params[0] + params[-1])
    order = sorted(range(len(params)), key=lambda i: (abs(params[i] - mid), i))
    guesses = start_points(SolverConfig(box=box, grid_per_axis=3, extra_random_starts=8))
    for i in order:
        for g in guesses:
            x = cs.solve_station(k, float(params[i]), g)
            if x is not None:
                return i, x
    return None


def sample_for_plot(p: Problem, axis: int, lo: float, hi: float, count: int,
                    anchor=None, contour: int = 0) -> bytes:
    """CSV of traced curve points (one row per sample) and optional f contour grid."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if not lo < hi and count > 1:
        raise ValueError("empty sampling range")
    names = p.names
    header = [f"# axis: {names[axis]}", f"# range: {fmt(lo)} {fmt(hi)}", f"# count: {count}"]
    cs = curve_system(p)
    if count == 1:
        if anchor is not None:
            pts = [np.asarray(anchor, dtype=float)]
        else:
            x = cs.solve_station(axis, lo, np.zeros(p.n))
            found = _find_anchor(p, axis, np.array([lo]), p.search_box()) if x is None else (0, x)
            pts = [found[1]] if found else []
        truncated = [] if pts else [(lo, lo)]
    else:
        params = np.linspace(lo, hi, count)
        if anchor is not None:
            anchor = np.asarray(anchor, dtype=float)
            i0 = int(np.argmin(np.abs(params - anchor[axis])))
            x0 = cs.solve_station(axis, float(params[i0]), anchor)
            found = None if x0 is None else (i0, x0)
        else:
            found = _find_anchor(p, axis, params, p.search_box())
        if found is None:
            pts, truncated = [], [(lo, hi)]
        else:
            i0, x0 = found
            step = float(params[1] - params[0])
            down = trace_curve(p, axis, x0, step, i0, directions=(-1,))
            up = trace_curve(p, axis, x0, step, count - 1 - i0, directions=(1,))
            pts = [np.asarray(q) for q in down.points] + [np.asarray(q) for q in up.points[1:]]
            truncated = []
            if len(down.points) - 1 < i0:
                truncated.append((lo, float(down.parameters[0])))
            if len(up.points) - 1 < count - 1 - i0:
                truncated.append((float(up.parameters[-1]), hi))
    for a, b in truncated:
        header.append(f"# truncated: {names[axis]} in [{fmt(a)}, {fmt(b)}] not reached")
    rows: list = header + [[*names, "f"]]
    rows += [[*(float(v) for v in x), cs.f(x)] for x in pts]
    if contour and p.n == 2:
        (x0, x1), (y0, y1) = p.search_box()
        gx, gy = np.linspace(x0, x1, contour), np.linspace(y0, y1, contour)
        grid = [(a, b) for a in gx for b in gy]
        vals, status = eval_batch(compile_exprs([p.f]), grid)
        rows += ["", "# contour", [*names, "f"]]
        rows += [[float(a), float(b), float(v[0]) if s < 0 else float("nan")]
                 for (a, b), v, s in zip(grid, vals, status)]
    return _csv_rows(rows)


# --- orchestration ----------------------------------------------------------------

def _timed(timing: dict, key: str, fn):
    t0 = time.perf_counter()
    out = fn()
    timing[key] = 1e3 * (time.perf_counter() - t0)
    return out


def run(command: str, p: Problem, cfg: SolverConfig | None = None, *, axes=None, at=None,
        order: int = 2, sample_range=None, count: int = 101, contour: int = 0,
        timing: bool = False, repetitions: int = 3) -> RunReport:
    """Execute one pipeline and gather everything into a :class:`RunReport`."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    cfg = cfg or SolverConfig(box=p.search_box())
    axes = list(range(p.n)) if axes is None else list(axes)
    config = cfg.to_dict()
    config.update(command=command, axes=[p.names[k] for k in axes], order=order,
                  at=None if at is None else _point(at))
    r = RunReport(command=command, problem=problem_dict(p), config=config)
    times: dict = {}
    diag = {"messages": degeneracy_diagnostics(p), "singular_axes": []}
    r.diagnostics = diag

    points: list[StationaryPoint] = []
    if command in ("solve", "compare", "all") or (command == "taylor" and at is None):
        stats = SolveStats()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            points = _timed(times, "stationary", lambda: find_stationary(p, cfg, stats=stats))
        r.stationary_points = [_stationary(p, sp) for sp in points]
        diag["stationary_solver"] = {"starts": stats.starts, "converged": stats.converged,
                                     "newton_iterations": stats.newton_iterations,
                                     "failures": dict(stats.failures)}
        for sp in points:
            for a in sp.axes:
                if not a.valid:
                    diag["singular_axes"].append({"point": _point(sp.point), "axis": p.names[a.axis]})

    if command in ("boundaries", "all"):
        found, unbounded = _timed(times, "boundaries", lambda: find_boundaries(p, axes, cfg))
        flags = {u.axis: u for u in unbounded}
        for k in axes:
            u: Unbounded | None = flags.get(k)
            r.boundaries[p.names[k]] = {
                "unbounded": u is not None,
                "det": None if u is None else u.det,
                "points": [{"point": _point(bp.point), "residuals": _point(bp.residuals)}
                           for bp in found.get(k, [])],
            }
        distinct: list = []
        for k in axes:
            for bp in found.get(k, []):
                if all(max(abs(a - b) for a, b in zip(bp.point, q)) > cfg.dedupe_tol for q in distinct):
                    distinct.append(bp.point)
        diag["distinct_boundary_points"] = len(distinct)

    if command in ("taylor", "all"):
        centers = [tuple(at)] if at is not None else [sp.point for sp in points]
        t0 = time.perf_counter()
        for c in centers:
            for k in axes:
                entry = {"axis": p.names[k], "center": _point(c), "order": order}
                try:
                    s = taylor_series(p, k, c, order)
                except (SingularUnrecoverableError, NotOnCurveError) as exc:
                    entry["error"] = str(exc)
                    if isinstance(exc, NotOnCurveError) and at is not None:
                        raise
                else:
                    entry.update(coefficients=list(s.coefficients),
                                 singular_parametrization=s.singular_parametrization,
                                 extrapolated=s.extrapolated, warnings=list(s.warnings))
                r.taylor.append(entry)
        times["taylor"] = 1e3 * (time.perf_counter() - t0)

    if command in ("lagrange", "compare", "all"):
        stats = SolveStats()
        lag = _timed(times, "lagrange",
                     lambda: [] if diag["messages"] else find_stationary_lagrange(p, cfg, stats=stats))
        cv = {"lagrange_points": [{"point": _point(lp.point), "multipliers": _point(lp.multipliers),
                                   "residual_norm": lp.residual_norm} for lp in lag],
              "lagrange_solver": {"starts": stats.starts, "converged": stats.converged,
                                  "newton_iterations": stats.newton_iterations,
                                  "failures": dict(stats.failures)}}
        if command != "lagrange":
            cv.update(cross_validate(points, lag, tol=1e-7, problem=p).to_dict())
            bench = benchmark_methods(p, cfg, repetitions if timing else 1)
            cv["benchmark"] = {name: {k: v for k, v in m.to_dict().items() if k != "median_ms"}
                               for name, m in bench.items()}
            for name, m in bench.items():
                times[f"benchmark_{name}_median"] = m.median_ms
        r.cross_validation = cv

    if command == "sample":
        k = axes[0]
        lo, hi = sample_range if sample_range is not None else p.search_box()[k]
        csv_bytes = _timed(times, "sample",
                           lambda: sample_for_plot(p, k, lo, hi, count, anchor=at, contour=contour))
        r.sample_csv = csv_bytes
        text = csv_bytes.decode("utf-8")
        data = [ln for ln in text.split("\n\n")[0].splitlines() if ln and not ln.startswith("#")][1:]
        diag["sample"] = {"axis": p.names[k], "rows": len(data),
                          "truncated": [ln[2:] for ln in text.splitlines() if ln.startswith("# truncated")]}

    if timing:
        r.timing_ms = times
    r.found = {
        "solve": bool(r.stationary_points),
        "boundaries": any(b["points"] or b["unbounded"] for b in r.boundaries.values()),
        "taylor": any("coefficients" in t for t in r.taylor),
        "lagrange": bool(r.cross_validation.get("lagrange_points")),
        "compare": bool(r.stationary_points or r.cross_validation.get("lagrange_points")),
        "sample": bool(r.diagnostics.get("sample", {}).get("rows")),
        "all": bool(r.stationary_points),
    }[command]
    return r
