"""Stationary points and constraint-curve boundaries.

Stationarity on the curve is the square system

    Det J_(f,g)(x) = 0,  g_k(x) = C_k   (k = 1..N-1)

and the extremities of the curve along x_k solve Det S_k(x) = 0 together
with all N-1 constraints.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .expr import CONST, DomainError, Expr, to_text
from .kernels import compile_exprs, eval_tape
from .matrix import constraint_jacobian, constraint_matrix, determinant, problem_jacobian
from .problem import Problem
from .rational import is_identically_zero
from .solver import SolverConfig, SolveStats, multistart_solve
from .taylor import axis_singularity, curve_derivative

MINIMUM = "minimum"
MAXIMUM = "maximum"
INFLECTION = "inflection"
DEGENERATE = "degenerate"
INDETERMINATE = "indeterminate"


class DegenerateProblemWarning(UserWarning):
    pass


class NotStationaryError(ValueError):
    pass


@dataclass(frozen=True)
class AxisData:
    axis: int
    det_s: float
    valid: bool
    d1: float | None = None
    d2: float | None = None


@dataclass
class StationaryPoint:
    point: tuple
    f_value: float
    residuals: tuple
    axes: list
    label: str
    diagnostics: list = field(default_factory=list)

    def axis(self, k: int) -> AxisData:
        return self.axes[k]


@dataclass(frozen=True)
class BoundaryPoint:
    axis: int
    point: tuple
    residuals: tuple


@dataclass(frozen=True)
class Unbounded:
    """Det S_axis is a nonzero constant: the curve never turns back in x_axis."""

    axis: int
    det: float


# --- systems -----------------------------------------------------------------------

_DET_CACHE: dict = {}


def stationarity_determinant(p: Problem) -> Expr:
    hit = _DET_CACHE.get(id(p))
    if hit is None or hit[0] is not p:
        hit = (p, determinant(problem_jacobian(p.f, p.g, p.n)))
        _DET_CACHE[id(p)] = hit
    return hit[1]


def stationary_system(p: Problem) -> list[Expr]:
    return [stationarity_determinant(p), *p.residuals]


def constraint_determinant(p: Problem, k: int) -> Expr:
    return determinant(constraint_matrix(constraint_jacobian(p.g, p.n), k))


def boundary_system(p: Problem, k: int) -> list[Expr] | Unbounded:
    det = constraint_determinant(p, k)
    if det.kind == CONST and det.value != 0.0:
        return Unbounded(k, det.value)
    return [det, *p.residuals]


def degeneracy_diagnostics(p: Problem) -> list[str]:
    """Problem-level warnings about identically vanishing determinants."""
    out = []
    if all(is_identically_zero(constraint_determinant(p, k)) for k in range(p.n)):
        out.append("constraint gradients are linearly dependent everywhere "
                   "(every constraint matrix is singular)")
    if is_identically_zero(stationarity_determinant(p)):
        out.append("Det J_(f,g) vanishes identically: f is functionally dependent on the "
                   "constraints, stationary points are not isolated")
    return out


# --- classification -----------------------------------------------------------------

def _eval_or_none(e: Expr, point) -> float | None:
    try:
        v = eval_tape(compile_exprs([e]), point)[0]
    except DomainError:
        return None
    return v if math.isfinite(v) else None


def classify(point, p: Problem, residual_tol: float = 1e-9) -> StationaryPoint:
    """Fill per-axis derivative data and label the point from the sign of f''."""
    point = tuple(float(v) for v in point)
    system = stationary_system(p)
    residuals = tuple(eval_tape(compile_exprs(system), point))
    if max(abs(r) for r in residuals) > residual_tol:
        raise NotStationaryError(f"{point} does not satisfy the stationarity system "
                                 f"(max residual {max(abs(r) for r in residuals):.3g})")
    fval = eval_tape(compile_exprs([p.f]), point)[0]
    axes = []
    for k in range(p.n):
        det, _, valid = axis_singularity(p, k, point)
        # the plain quotient is exact where Det S_k != 0; cancel only at removable singularities
        d1 = _eval_or_none(curve_derivative(p, k, 1, cancel=not valid), point)
        d2 = _eval_or_none(curve_derivative(p, k, 2, cancel=not valid), point)
        axes.append(AxisData(axis=k, det_s=det, valid=valid, d1=d1, d2=d2))
    label, diags = _label(axes, fval)
    return StationaryPoint(point=point, f_value=fval, residuals=residuals, axes=axes,
                           label=label, diagnostics=diags)


def _label(axes: list[AxisData], fval: float) -> tuple[str, list[str]]:
    tol = 1e-7 * (1.0 + abs(fval))
    second = [a.d2 for a in axes if a.valid and a.d2 is not None]
    if not second:
        return INDETERMINATE, ["no axis with a regular parametrisation"]
    if any(abs(v) <= tol for v in second):
        return DEGENERATE, []
    if all(v > tol for v in second):
        return MINIMUM, []
    if all(v < -tol for v in second):
        return MAXIMUM, []
    return INDETERMINATE, ["second curve derivatives disagree in sign across regular axes"]


# --- drivers ------------------------------------------------------------------------

def default_config(p: Problem, **kw) -> SolverConfig:
    return SolverConfig(box=p.search_box(), **kw)


def find_stationary(p: Problem, cfg: SolverConfig | None = None,
                    stats: SolveStats | None = None) -> list[StationaryPoint]:
    cfg = cfg or default_config(p)
    diags = degeneracy_diagnostics(p)
    if diags:
        for d in diags:
            warnings.warn(d, DegenerateProblemWarning, stacklevel=2)
        return []
    roots = multistart_solve(stationary_system(p), cfg, stats=stats)
    return [classify(r.point, p, residual_tol=cfg.residual_tol) for r in roots]


def find_boundaries(p: Problem, axes: Iterable[int] | None = None, cfg: SolverConfig | None = None,
                    stats: SolveStats | None = None) -> tuple[dict, list[Unbounded]]:
    """Per-axis boundary points; the same point may bound several axes."""
    cfg = cfg or default_config(p)
    axes = range(p.n) if axes is None else axes
    found: dict[int, list[BoundaryPoint]] = {}
    unbounded: list[Unbounded] = []
    for k in axes:
        system = boundary_system(p, k)
        if isinstance(system, Unbounded):
            unbounded.append(system)
            found[k] = []
            continue
        if is_identically_zero(system[0]):
            found[k] = []
            continue
        roots = multistart_solve(system, cfg, stats=stats)
        tape = compile_exprs(system)
        found[k] = [BoundaryPoint(axis=k, point=r.point, residuals=tuple(eval_tape(tape, r.point)))
                    for r in roots]
    return found, unbounded


def lagrange_residual(p: Problem, point) -> tuple[float, np.ndarray, float]:
    """Least-squares multipliers at ``point``.

    Returns (residual of grad f - sum lambda_k grad g_k, lambda, smallest
    singular value of J_(g)).
    """
    jf = problem_jacobian(p.f, p.g, p.n).evaluate(point)
    grad_f, jg = jf[0], jf[1:]
    sv = np.linalg.svd(jg, compute_uv=False)
    lam, *_ = np.linalg.lstsq(jg.T, grad_f, rcond=None)
    resid = float(np.linalg.norm(grad_f - jg.T @ lam))
    return resid, lam, float(sv.min()) if sv.size else math.inf


def describe(p: Problem, e: Expr) -> str:
    return to_text(e, p.names)
