"""Derivatives of the objective along the constraint curve.

The m-th derivative of f with respect to x_k, with the other variables
slaved to the constraints, is built by repeatedly taking the total
derivative ``sum_i d(e)/dx_i * s_{i,k}``.  A numeric curve tracer and a
finite-difference estimator serve as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .expr import (
    ZERO, DomainError, Expr, add, differentiate, div, mul, node_count,
)
from .kernels import compile_exprs, eval_tape
from .matrix import InfinitesimalCoeffs, constraint_jacobian, infinitesimal_coeffs
from .problem import Problem
from . import rational

MAX_NODES = 1_000_000
ON_CURVE_TOL = 1e-8


class ExpressionTooLargeError(RuntimeError):
    pass


class NotOnCurveError(ValueError):
    pass


class SingularUnrecoverableError(ArithmeticError):
    pass


class InsufficientStencilError(ValueError):
    pass


def directional_derivative(e: Expr, coeffs: InfinitesimalCoeffs, cancel: bool = True) -> Expr:
    """Total derivative of ``e`` along the constraint curve w.r.t. x_axis."""
    k = coeffs.axis
    n = len(coeffs.numerators)
    parts = [differentiate(e, i) for i in range(n)]
    if all(parts[i] is ZERO for i in range(n) if i != k):
        return parts[k]
    num = ZERO
    for i in range(n):
        if parts[i] is not ZERO:
            num = add(num, mul(parts[i], coeffs.numerators[i]))
    out = div(num, coeffs.denominator)
    size = node_count(out)
    if size > MAX_NODES:
        raise ExpressionTooLargeError(
            f"curve derivative has {size} nodes; use numeric_curve_derivatives on a traced curve instead")
    if cancel:
        out = rational.cancel(out)
    return out


@lru_cache(maxsize=256)
def _coeffs(problem: Problem, k: int) -> InfinitesimalCoeffs:
    return infinitesimal_coeffs(constraint_jacobian(problem.g, problem.n), k)


def axis_coeffs(problem: Problem, k: int) -> InfinitesimalCoeffs:
    return _coeffs(problem, k)


_DERIV_CACHE: dict = {}


def curve_derivative(problem: Problem, k: int, order: int, cancel: bool = True) -> Expr:
    """Symbolic d^m f / dx_k^m on the curve, as a function of all variables."""
    if order < 1:
        raise ValueError("order must be at least 1")
    if not 0 <= k < problem.n:
        raise IndexError(k)
    key = (id(problem), k, cancel)
    entry = _DERIV_CACHE.get(key)
    if entry is None or entry[0] is not problem:
        entry = (problem, [problem.f])
        _DERIV_CACHE[key] = entry
    chain = entry[1]
    coeffs = _coeffs(problem, k)
    while len(chain) <= order:
        chain.append(directional_derivative(chain[-1], coeffs, cancel=cancel))
    return chain[order]


def curve_derivatives(problem: Problem, k: int, order: int, cancel: bool = True) -> list[Expr]:
    return [curve_derivative(problem, k, m, cancel) for m in range(1, order + 1)]


# --- numeric helpers ---------------------------------------------------------

class _CurveSystem:
    """Residuals and Jacobian of the constraints, compiled once per problem."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.n = problem.n
        res = problem.residuals
        jac = [differentiate(r, j) for r in res for j in range(self.n)]
        self.tape = compile_exprs(res + jac)
        self.f_tape = compile_exprs([problem.f])

    def evaluate(self, x):
        vals = eval_tape(self.tape, x)
        m = self.n - 1
        return np.asarray(vals[:m]), np.asarray(vals[m:]).reshape(m, self.n)

    def tangent(self, x, k: int):
        """dx/dx_k at ``x``; None where the constraint matrix is singular."""
        _, J = self.evaluate(x)
        others = [j for j in range(self.n) if j != k]
        S = J[:, others]
        try:
            sol = np.linalg.solve(S, -J[:, k])
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        t = np.zeros(self.n)
        t[k] = 1.0
        t[others] = sol
        return t

    def solve_station(self, k: int, xk: float, guess, tol: float = 1e-10, max_iter: int = 50):
        """Newton on the other variables with x_k fixed; None on failure."""
        x = np.array(guess, dtype=float)
        x[k] = xk
        others = [j for j in range(self.n) if j != k]
        converged = False
        for _ in range(max_iter):
            try:
                F, J = self.evaluate(x)
            except DomainError:
                return None
            if not np.all(np.isfinite(F)) or not np.all(np.isfinite(J)):
                return None
            r = np.max(np.abs(F)) if len(F) else 0.0
            if converged or r == 0.0:
                return x if r <= tol else None
            try:
                d = np.linalg.solve(J[:, others], -F)
            except np.linalg.LinAlgError:
                return None
            x[others] += d
            if np.max(np.abs(d)) <= 1e-15 * (1.0 + np.max(np.abs(x))):
                converged = True
        try:
            F, _ = self.evaluate(x)
        except DomainError:
            return None
        return x if np.max(np.abs(F)) <= tol else None

    def f(self, x) -> float:
        return eval_tape(self.f_tape, x)[0]


@lru_cache(maxsize=64)
def curve_system(problem: Problem) -> _CurveSystem:
    return _CurveSystem(problem)


def constraint_residual(problem: Problem, point) -> float:
    F, _ = curve_system(problem).evaluate(point)
    return float(np.max(np.abs(F))) if len(F) else 0.0


def axis_singularity(problem: Problem, k: int, point) -> tuple[float, float, bool]:
    """(Det S_k, max |S_k entry|, valid) at ``point``; valid uses a 1e-8 relative threshold."""
    _, J = curve_system(problem).evaluate(point)
    S = np.delete(J, k, axis=1)
    det = float(np.linalg.det(S)) if S.size else 1.0
    scale = float(np.max(np.abs(S))) if S.size else 1.0
    valid = scale > 0.0 and abs(det) > 1e-8 * scale
    return det, scale, valid


# --- curve tracing -------------------------------------------------------------

@dataclass
class CurveSample:
    axis: int
    parameters: list
    points: list
    f_values: list
    truncated: dict = field(default_factory=dict)

    def index_of(self, value: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.parameters) - value)))


def _march(cs: _CurveSystem, k: int, start, step: float, count: int, direction: int, tol: float):
    out = []
    x = np.array(start, dtype=float)
    for i in range(1, count + 1):
        xk = start[k] + direction * i * step
        t = cs.tangent(x, k)
        guesses = []
        if t is not None:
            guesses.append(x + t * (xk - x[k]))
        else:
            # singular previous point: nudge the slaved coordinates both ways
            delta = math.sqrt(abs(step))
            for sign in (1.0, -1.0):
                g = x.copy()
                g[[j for j in range(cs.n) if j != k]] += sign * delta
                guesses.append(g)
        nxt = None
        for g in guesses:
            cand = cs.solve_station(k, xk, g, tol)
            if cand is None:
                continue
            if t is not None:
                bound = 10.0 * abs(step) * (1.0 + float(np.max(np.abs(t))))
                if np.max(np.abs(cand - g)) > bound:
                    continue
            nxt = cand
            break
        if nxt is None:
            return out, True
        out.append(nxt)
        x = nxt
    return out, False


def trace_curve(problem: Problem, k: int, start, step: float, count: int,
                directions=(-1, 1), tol: float = 1e-10) -> CurveSample:
    """March x_k from ``start`` in steps of ``step``, re-solving the constraints at each station."""
    cs = curve_system(problem)
    start = np.asarray(start, dtype=float)
    if constraint_residual(problem, start) > ON_CURVE_TOL:
        raise NotOnCurveError(f"start {tuple(start)} does not satisfy the constraints")
    if not step > 0:
        raise ValueError("step must be positive")
    pieces = {}
    truncated = {}
    for d in directions:
        pts, stopped = _march(cs, k, start, step, count, d, tol)
        pieces[d] = pts
        truncated["low" if d < 0 else "high"] = stopped
    pts = list(reversed(pieces.get(-1, []))) + [start] + pieces.get(1, [])
    return CurveSample(
        axis=k,
        parameters=[float(p[k]) for p in pts],
        points=[tuple(float(v) for v in p) for p in pts],
        f_values=[cs.f(p) for p in pts],
        truncated=truncated,
    )


def default_step(box) -> float:
    width = max(hi - lo for lo, hi in box)
    return min(max(width / 1000.0, 1e-6), 1e-2)


# --- finite differences ----------------------------------------------------------

def _fd_weights(order: int, offsets: np.ndarray) -> np.ndarray:
    A = np.vander(offsets, increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


_ONE_SIDED_EXTRA = 4


def _one_sided(fvals: np.ndarray, center: int, m: int, h: float) -> float:
    # the curve may exist on one side only (a fold in another coordinate)
    width = m + _ONE_SIDED_EXTRA
    if center + width < len(fvals):
        offsets = np.arange(0, width + 1)
    elif center - width >= 0:
        offsets = -np.arange(0, width + 1)
    else:
        raise InsufficientStencilError(
            f"order {m} needs {(m + 1) // 2 or 1} samples either side or {width} on one side")
    w = _fd_weights(m, offsets.astype(float))
    return float(np.dot(w, fvals[center + offsets])) / h ** m


def numeric_curve_derivatives(sample: CurveSample, center_index: int, max_order: int,
                              levels: int = 3) -> list[float]:
    """Central differences on the uniform sample with Richardson refinement.

    Falls back to a one-sided stencil when the sample ends at the center.

    Returns estimates of d^m f/dx_k^m for m = 1..max_order at the sample
    point ``center_index``.
    """
    params = np.asarray(sample.parameters)
    fvals = np.asarray(sample.f_values)
    if len(params) < 3:
        raise InsufficientStencilError("need at least three samples")
    h = float(np.median(np.diff(params)))
    out = []
    for m in range(1, max_order + 1):
        half = (m + 1) // 2 if m % 2 else m // 2
        half = max(half, 1)
        weights = _fd_weights(m, np.arange(-half, half + 1, dtype=float))
        table = []
        for lvl in range(levels):
            stride = 2 ** lvl
            lo = center_index - half * stride
            hi = center_index + half * stride
            if lo < 0 or hi >= len(fvals):
                break
            idx = center_index + np.arange(-half, half + 1) * stride
            H = h * stride
            table.append(float(np.dot(weights, fvals[idx])) / H ** m)
        if not table:
            out.append(_one_sided(fvals, center_index, m, h))
            continue
        # error expansion in even powers of the spacing
        for i in range(1, len(table)):
            table = [table[j] + (table[j] - table[j + 1]) / (4 ** i - 1) for j in range(len(table) - 1)]
        out.append(table[0])
    return out


# --- Taylor series -----------------------------------------------------------------

@dataclass
class TaylorSeries:
    axis: int
    center: tuple
    order: int
    coefficients: list
    singular_parametrization: bool = False
    extrapolated: bool = False
    warnings: list = field(default_factory=list)

    def __call__(self, xk: float) -> float:
        u = xk - self.center[self.axis]
        return sum(c * u ** m for m, c in enumerate(self.coefficients))


def _valid_axis(problem: Problem, point, exclude: int) -> int | None:
    best, best_ratio = None, 0.0
    for j in range(problem.n):
        if j == exclude:
            continue
        det, scale, valid = axis_singularity(problem, j, point)
        if valid and abs(det) / scale > best_ratio:
            best, best_ratio = j, abs(det) / scale
    return best


def _ridders(estimates: list[float], safe: float = 2.0) -> tuple[float, float]:
    """Richardson in h^2 over halving steps, keeping the entry with the smallest error estimate.

    Stops once the diagonal starts growing, which is where rounding noise
    takes over from truncation error.
    """
    best, err = estimates[0], math.inf
    prev_row = [estimates[0]]
    for i in range(1, len(estimates)):
        row = [estimates[i]]
        fac = 4.0
        for j in range(1, i + 1):
            row.append((row[j - 1] * fac - prev_row[j - 1]) / (fac - 1.0))
            fac *= 4.0
            e = max(abs(row[j] - row[j - 1]), abs(row[j] - prev_row[j - 1]))
            if e <= err:
                best, err = row[j], e
        if abs(row[i] - prev_row[i - 1]) >= safe * err:
            break
        prev_row = row
    return best, err


def _extrapolate(problem: Problem, tape, center, k: int) -> list[float]:
    """Limit of the derivative values along the curve as it approaches ``center``."""
    j = _valid_axis(problem, center, exclude=k)
    if j is None:
        raise SingularUnrecoverableError("no regular axis to approach the centre along")
    cs = curve_system(problem)
    center = np.asarray(center, dtype=float)
    t = cs.tangent(center, j)
    h0 = 0.1 * (1.0 + abs(center[j]))
    estimates = []
    for lvl in range(12):
        h = h0 / 2 ** lvl
        vals = []
        for sgn in (1.0, -1.0):
            xj = center[j] + sgn * h
            guess = center + t * (xj - center[j]) if t is not None else center
            p = cs.solve_station(j, xj, guess)
            if p is None:
                break
            try:
                v = np.asarray(eval_tape(tape, p))
            except DomainError:
                break
            if not np.all(np.isfinite(v)):
                break
            vals.append(v)
        if len(vals) != 2:
            if estimates:
                break
            continue  # the curve may not reach this far from the centre
        # symmetric average cancels the odd error terms
        estimates.append(0.5 * (vals[0] + vals[1]))
    if len(estimates) < 3:
        raise SingularUnrecoverableError("could not sample the curve on both sides of the centre")
    out = []
    for m in range(len(estimates[0])):
        v, err = _ridders([float(e[m]) for e in estimates])
        if not math.isfinite(v) or err > 1e-4 * (1.0 + abs(v)):
            raise SingularUnrecoverableError("derivative values do not settle near the centre")
        out.append(v)
    return out


def taylor_series(problem: Problem, k: int, center, order: int, cancel: bool = True) -> TaylorSeries:
    """Coefficients c_m = f_k^(m)(center) / m! for m = 0..order."""
    center = tuple(float(v) for v in center)
    if len(center) != problem.n:
        raise ValueError(f"centre needs {problem.n} coordinates")
    if constraint_residual(problem, center) > ON_CURVE_TOL:
        raise NotOnCurveError(f"{center} does not satisfy the constraints")
    cs = curve_system(problem)
    _, _, valid = axis_singularity(problem, k, center)
    series = TaylorSeries(axis=k, center=center, order=order, coefficients=[cs.f(center)],
                          singular_parametrization=not valid)
    if not valid:
        series.warnings.append(
            f"constraint matrix for axis {problem.names[k]} is singular at the centre; "
            "the curve folds in this coordinate")
    if order == 0:
        return series
    derivs = curve_derivatives(problem, k, order, cancel=cancel)
    tape = compile_exprs(derivs)
    try:
        values = eval_tape(tape, center)
        if not all(math.isfinite(v) for v in values):
            raise DomainError("non-finite derivative")
    except DomainError:
        values = _extrapolate(problem, tape, center, k)
        series.extrapolated = True
        series.warnings.append("derivatives extrapolated along the curve (removable singularity)")
    for m, v in enumerate(values, start=1):
        series.coefficients.append(v / math.factorial(m))
    return series
