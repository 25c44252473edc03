"""Lagrange-multiplier baseline used to cross-check the determinant method.

The extended system lives over (x_1..x_N, lambda_1..lambda_{N-1}) with the
convention L = f - sum lambda_k g_k.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .expr import DomainError, Expr, differentiate, mul, sub, var
from .matrix import problem_jacobian
from .problem import Problem
from .solver import Root, SolverConfig, SolveStats, dedupe, multistart_solve, start_points
from .stationary import (
    StationaryPoint, degeneracy_diagnostics, find_stationary, lagrange_residual,
)

LAMBDA_BOX = (-100.0, 100.0)


@dataclass(frozen=True)
class LagrangePoint:
    point: tuple
    multipliers: tuple
    residual_norm: float


def lagrangian_system(p: Problem) -> list[Expr]:
    """Stationarity of L in x followed by the constraints, over x then lambda."""
    n = p.n
    lams = [var(n + k) for k in range(n - 1)]
    eqs = []
    for j in range(n):
        e = differentiate(p.f, j)
        for lam, g in zip(lams, p.g):
            e = sub(e, mul(lam, differentiate(g, j)))
        eqs.append(e)
    return eqs + list(p.residuals)


def _ls_multipliers(p: Problem, x) -> np.ndarray:
    try:
        _, lam, _ = lagrange_residual(p, x)
    except (DomainError, np.linalg.LinAlgError):
        return np.zeros(p.n - 1)
    if not np.all(np.isfinite(lam)):
        return np.zeros(p.n - 1)
    return lam


def extended_config(p: Problem, cfg: SolverConfig, lambda_box=LAMBDA_BOX) -> SolverConfig:
    return cfg.with_box(tuple(cfg.box) + (tuple(lambda_box),) * (p.n - 1))


def lagrange_starts(p: Problem, cfg: SolverConfig, lambda_box=LAMBDA_BOX) -> np.ndarray:
    """x-grid starts with least-squares multipliers, then random extended starts."""
    n = p.n
    grid_cfg = SolverConfig(box=cfg.box, grid_per_axis=cfg.grid_per_axis, extra_random_starts=0)
    lo, hi = lambda_box
    rows = []
    for x in start_points(grid_cfg):
        lam = np.clip(_ls_multipliers(p, x), lo, hi)
        rows.append(np.concatenate([x, lam]))
    ext = extended_config(p, cfg, lambda_box)
    rng = np.random.default_rng(cfg.rng_seed)
    extra = rng.uniform(ext.lo, ext.hi, size=(cfg.extra_random_starts, 2 * n - 1))
    return np.vstack([np.array(rows).reshape(-1, 2 * n - 1), extra])


def find_stationary_lagrange(p: Problem, cfg: SolverConfig | None = None,
                             lambda_box=LAMBDA_BOX, stats: SolveStats | None = None) -> list[LagrangePoint]:
    cfg = cfg or SolverConfig(box=p.search_box())
    n = p.n
    ext = extended_config(p, cfg, lambda_box)
    roots = multistart_solve(lagrangian_system(p), ext, starts=lagrange_starts(p, cfg, lambda_box),
                             stats=stats, box_axes=n)
    projected = [Root(r.point[:n], r.residual_norm, r.iterations, r.start_index) for r in roots]
    lam_of = {r.start_index: r.point[n:] for r in roots}
    return [LagrangePoint(point=r.point, multipliers=tuple(lam_of[r.start_index]),
                          residual_norm=r.residual_norm)
            for r in dedupe(projected, cfg.dedupe_tol)]


# --- cross validation -----------------------------------------------------------------

@dataclass
class MatchReport:
    matched: list = field(default_factory=list)  # (det point, lagrange point, distance, multiplier residual)
    det_only: list = field(default_factory=list)  # (det point, least-squares residual, rank deficient)
    lagrange_only: list = field(default_factory=list)

    @property
    def agree(self) -> bool:
        """No unmatched points apart from those where J_(g) loses rank."""
        return not self.lagrange_only and all(rank_def for _, _, rank_def in self.det_only)

    def to_dict(self) -> dict:
        return {
            "matched": [{"point": list(d), "lagrange_point": list(l), "distance": dist,
                         "multiplier_residual": res} for d, l, dist, res in self.matched],
            "det_only": [{"point": list(d), "ls_residual": res, "rank_deficient": rd}
                         for d, res, rd in self.det_only],
            "lagrange_only": [list(l) for l in self.lagrange_only],
            "agree": self.agree,
        }


def multiplier_residual(p: Problem, point, multipliers) -> float:
    """||grad f - sum lambda_k grad g_k|| at ``point``."""
    jf = problem_jacobian(p.f, p.g, p.n).evaluate(point)
    return float(np.linalg.norm(jf[0] - jf[1:].T @ np.asarray(multipliers, dtype=float)))


def cross_validate(det_points, lag_points, tol: float = 1e-7, problem: Problem | None = None,
                   rank_tol: float = 1e-8) -> MatchReport:
    """Match points on their x-coordinates (max-norm distance <= tol).

    With ``problem`` given, matched pairs carry the multiplier residual and
    unmatched determinant points carry their least-squares residual plus a
    rank-deficiency flag.
    """
    dets = [tuple(d.point) if isinstance(d, StationaryPoint) else tuple(d) for d in det_points]
    lags = list(lag_points)
    pairs = sorted(
        (float(np.max(np.abs(np.subtract(d, l.point)))), i, j)
        for i, d in enumerate(dets) for j, l in enumerate(lags))
    used_d, used_l = set(), set()
    report = MatchReport()
    for dist, i, j in pairs:
        if dist > tol:
            break
        if i in used_d or j in used_l:
            continue
        used_d.add(i)
        used_l.add(j)
        res = multiplier_residual(problem, dets[i], lags[j].multipliers) if problem else float("nan")
        report.matched.append((dets[i], lags[j].point, dist, res))
    for i, d in enumerate(dets):
        if i in used_d:
            continue
        if problem is None:
            report.det_only.append((d, float("nan"), False))
        else:
            res, _, smin = lagrange_residual(problem, d)
            report.det_only.append((d, res, smin <= rank_tol))
    report.lagrange_only = [lags[j].point for j in range(len(lags)) if j not in used_l]
    report.matched.sort()
    return report


# --- benchmark --------------------------------------------------------------------------

@dataclass
class MethodTiming:
    method: str
    dimension: int
    median_ms: float
    newton_iterations: int
    starts: int
    roots: int
    points: list
    diagnostics: list

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("method", "dimension", "median_ms", "newton_iterations", "starts", "roots",
                 "points", "diagnostics")}


def _timed(fn, repetitions: int):
    times, out, stats = [], None, None
    for _ in range(max(1, repetitions)):
        stats = SolveStats()
        t0 = time.perf_counter()
        out = fn(stats)
        times.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(times), out, stats


def benchmark_methods(p: Problem, cfg: SolverConfig | None = None, repetitions: int = 5) -> dict:
    """Run both pipelines ``repetitions`` times; counts come from the last run."""
    import warnings
    cfg = cfg or SolverConfig(box=p.search_box())
    diags = degeneracy_diagnostics(p)

    def det(stats):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return [sp.point for sp in find_stationary(p, cfg, stats=stats)]

    def lag(stats):
        if diags:
            return []
        return [lp.point for lp in find_stationary_lagrange(p, cfg, stats=stats)]

    out = {}
    for name, dim, fn in (("determinant", p.n, det), ("lagrange", 2 * p.n - 1, lag)):
        ms, pts, st = _timed(fn, repetitions)
        out[name] = MethodTiming(name, dim, ms, st.newton_iterations, st.starts, len(pts),
                                 [list(x) for x in pts], list(diags))
    return out
