"""Multistart damped Newton for square systems of expressions."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .expr import Expr, differentiate
from .kernels import FAILURE_REASONS, OK, compile_exprs, eval_batch, run_multistart
from .matrix import ExprMatrix


@dataclass(frozen=True)
class SolverConfig:
    box: tuple  # ((lo, hi), ...) per variable
    grid_per_axis: int = 7
    extra_random_starts: int = 50
    rng_seed: int = 0
    newton_max_iter: int = 100
    residual_tol: float = 1e-10
    step_tol: float = 1e-12
    dedupe_tol: float = 1e-6
    backtrack_factor: float = 0.5
    min_step: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        for lo, hi in box:
            if not lo < hi:
                raise ValueError(f"empty search interval [{lo}, {hi}]")
        if min(self.residual_tol, self.step_tol, self.dedupe_tol, self.min_step) <= 0:
            raise ValueError("tolerances must be positive")
        if self.grid_per_axis < 1 or self.newton_max_iter < 1 or self.workers < 1:
            raise ValueError("counts must be at least 1")
        if self.extra_random_starts < 0:
            raise ValueError("extra_random_starts must be non-negative")
        if self.backtrack_factor != 0.5:
            raise ValueError("only halving backtracking is supported")

    @classmethod
    def uniform(cls, n: int, lo: float = -3.0, hi: float = 3.0, **kw) -> "SolverConfig":
        return cls(box=((lo, hi),) * n, **kw)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.box])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.box])

    def with_box(self, box) -> "SolverConfig":
        return replace(self, box=tuple(box))

    def to_dict(self) -> dict:
        return {
            "box": [list(b) for b in self.box],
            "grid_per_axis": self.grid_per_axis,
            "extra_random_starts": self.extra_random_starts,
            "rng_seed": self.rng_seed,
            "newton_max_iter": self.newton_max_iter,
            "residual_tol": self.residual_tol,
            "step_tol": self.step_tol,
            "dedupe_tol": self.dedupe_tol,
            "backtrack_factor": self.backtrack_factor,
            "min_step": self.min_step,
        }


@dataclass(frozen=True)
class Root:
    point: tuple
    residual_norm: float
    iterations: int
    start_index: int


class NewtonFailure(Exception):
    def __init__(self, reason: str, point, residual: float, iterations: int):
        super().__init__(f"Newton failed ({reason}) after {iterations} iterations")
        self.reason = reason
        self.point = tuple(point)
        self.residual = residual
        self.iterations = iterations


@dataclass
class SolveStats:
    starts: int = 0
    converged: int = 0
    newton_iterations: int = 0
    failures: dict = field(default_factory=dict)


def system_jacobian(system: Sequence[Expr], n: int | None = None) -> ExprMatrix:
    n = len(system) if n is None else n
    return ExprMatrix(len(system), n, tuple(differentiate(e, j) for e in system for j in range(n)))


def _newton_tape(system: Sequence[Expr], jac: ExprMatrix | None):
    n = len(system)
    if jac is None:
        jac = system_jacobian(system)
    if jac.rows != n or jac.cols != n:
        raise ValueError(f"Jacobian must be {n}x{n}")
    return compile_exprs(list(system) + list(jac.entries))


def newton_solve(system: Sequence[Expr], x0, cfg: SolverConfig, jac: ExprMatrix | None = None) -> Root:
    """Single damped Newton run; raises :class:`NewtonFailure`."""
    n = len(system)
    tape = _newton_tape(system, jac)
    codes, X, res, iters = run_multistart(
        tape, n, [list(x0)], cfg.lo, cfg.hi, cfg.newton_max_iter, cfg.residual_tol,
        cfg.step_tol, cfg.min_step)
    if codes[0] != OK:
        raise NewtonFailure(FAILURE_REASONS[int(codes[0])], X[0], float(res[0]), int(iters[0]))
    return Root(tuple(float(v) for v in X[0]), float(res[0]), int(iters[0]), 0)


def start_points(cfg: SolverConfig) -> np.ndarray:
    """Full grid (inclusive of box corners) followed by seeded uniform points."""
    axes = [np.linspace(lo, hi, cfg.grid_per_axis) if cfg.grid_per_axis > 1 else np.array([0.5 * (lo + hi)])
            for lo, hi in cfg.box]
    grid = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(cfg.box))
    rng = np.random.default_rng(cfg.rng_seed)
    extra = rng.uniform(cfg.lo, cfg.hi, size=(cfg.extra_random_starts, len(cfg.box)))
    return np.vstack([grid, extra])


def dedupe(roots: Sequence[Root], tol: float) -> list[Root]:
    """Greedy max-norm clustering keeping the lowest-residual member."""
    reps: list[Root] = []
    for r in sorted(roots, key=lambda r: (r.residual_norm, r.point, r.start_index)):
        p = np.asarray(r.point)
        if all(np.max(np.abs(p - np.asarray(q.point))) > tol for q in reps):
            reps.append(r)
    return sorted(reps, key=lambda r: r.point)


def multistart_solve(system: Sequence[Expr], cfg: SolverConfig, jac: ExprMatrix | None = None,
                     starts=None, stats: SolveStats | None = None,
                     box_axes: int | None = None) -> list[Root]:
    """Newton from every start point; converged, in-box, deduplicated roots.

    Roots are kept when inside the box inflated by 1%; ``box_axes`` limits
    that test to the leading coordinates.
    """
    n = len(system)
    if len(cfg.box) != n:
        raise ValueError(f"box has {len(cfg.box)} axes for a system of {n} equations")
    tape = _newton_tape(system, jac)
    if starts is None:
        starts = start_points(cfg)
    starts = np.asarray(starts, dtype=float).reshape(-1, n)

    def work(chunk):
        return run_multistart(tape, n, chunk, cfg.lo, cfg.hi, cfg.newton_max_iter,
                              cfg.residual_tol, cfg.step_tol, cfg.min_step)

    if cfg.workers > 1 and len(starts) > cfg.workers:
        chunks = np.array_split(starts, cfg.workers)
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(work, chunks))
        codes = np.concatenate([p[0] for p in parts])
        X = np.vstack([p[1] for p in parts])
        res = np.concatenate([p[2] for p in parts])
        iters = np.concatenate([p[3] for p in parts])
    else:
        codes, X, res, iters = work(starts)

    if stats is not None:
        stats.starts += len(starts)
        stats.newton_iterations += int(np.sum(iters))
        for c in codes:
            if c != OK:
                reason = FAILURE_REASONS[int(c)]
                stats.failures[reason] = stats.failures.get(reason, 0) + 1

    m = n if box_axes is None else box_axes
    width = cfg.hi[:m] - cfg.lo[:m]
    lo, hi = cfg.lo[:m] - 0.01 * width, cfg.hi[:m] + 0.01 * width
    found = []
    for s in range(len(starts)):
        if codes[s] != OK:
            continue
        x = X[s]
        if np.all(x[:m] >= lo) and np.all(x[:m] <= hi):
            found.append(Root(tuple(float(v) for v in x), float(res[s]), int(iters[s]), s))
    if stats is not None:
        stats.converged += len(found)
    roots = dedupe(found, cfg.dedupe_tol)
    return verify(system, roots, cfg.residual_tol)


def verify(system: Sequence[Expr], roots: Sequence[Root], tol: float) -> list[Root]:
    if not roots:
        return []
    values, status = eval_batch(compile_exprs(list(system)), [r.point for r in roots])
    keep = []
    for r, v, st in zip(roots, values, status):
        if st < 0 and np.all(np.abs(v) <= tol):
            keep.append(r)
    return keep
