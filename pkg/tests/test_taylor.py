from __future__ import annotations

import math

import numpy as np
import pytest

from ceqopt.expr import const, evaluate, node_count
from ceqopt.matrix import constraint_jacobian, infinitesimal_coeffs
from ceqopt.problem import Problem
from ceqopt.stationary import find_stationary
from ceqopt.taylor import (
    CurveSample, InsufficientStencilError, NotOnCurveError, SingularUnrecoverableError,
    curve_derivative, curve_derivatives, curve_system, default_step,
    directional_derivative, numeric_curve_derivatives, taylor_series, trace_curve,
)

from conftest import SQRT3, example_1a, example_1b, example_2, example_2_points, on_curve_points

EXAMPLES = {"1a": example_1a, "1b": example_1b, "2": example_2}


# --- symbolic curve derivatives -----------------------------------------------------------

def test_directional_derivative_examples(rng):
    p = example_1a()
    cx = infinitesimal_coeffs(constraint_jacobian(p.g), 0)
    d = directional_derivative(p.f, cx)
    for y in rng.uniform(-2, 2, size=20):
        x = 1 + y * y
        assert evaluate(d, (x, y)) == pytest.approx(2 * (x + 1), rel=1e-12)
    assert directional_derivative(const(5.0), cx) is const(0.0)
    p = example_1b()
    cx = infinitesimal_coeffs(constraint_jacobian(p.g), 0)
    second = directional_derivative(directional_derivative(p.f, cx), cx)
    assert second.is_const and second.value == 6.0


def test_curve_derivatives_of_third_example(rng):
    p = example_2()
    d1y = curve_derivative(p, 1, 1)
    d2z = curve_derivative(p, 2, 2)
    d3z = curve_derivative(p, 2, 3)
    assert d3z.is_const and d3z.value == 6.0
    for x in on_curve_points(p, 1, 30, rng, reject=lambda q: abs(q[2]) < 0.05):
        z = x[2]
        assert evaluate(d1y, x) == pytest.approx(3 * z / 2 - 1 / (2 * z) - 3, rel=1e-12)
        assert evaluate(d2z, x) == pytest.approx(6 * (z - 1), rel=1e-12, abs=1e-12)


def test_first_example_formula_for_second_derivative_along_y(rng):
    p = example_1a()
    d2 = curve_derivative(p, 1, 2)
    for y in rng.uniform(-2, 2, size=20):
        x = 1 + y * y
        assert evaluate(d2, (x, y)) == pytest.approx(8 * y * y + 4 * x + 4, rel=1e-12)


def test_cancellation_removes_the_removable_singularity():
    p = example_2()
    A = (0.0, 3.0, -2.0)
    assert evaluate(curve_derivative(p, 2, 1), A) == 23.0
    from ceqopt.expr import DomainError
    with pytest.raises(DomainError):
        evaluate(curve_derivative(p, 2, 1, cancel=False), A)


# --- Taylor series ----------------------------------------------------------------------------

def test_taylor_first_example():
    p = example_1a()
    s = taylor_series(p, 0, (1.0, 0.0), 3)
    assert s.coefficients[:3] == pytest.approx([1.0, 4.0, 1.0], abs=1e-10)
    assert abs(s.coefficients[3]) <= 1e-9
    assert s.singular_parametrization  # the curve folds in x at (1, 0)
    t = taylor_series(p, 1, (1.0, 0.0), 4)
    # f~(y) = (1 + y^2)^2 + 2y^2
    assert t.coefficients == pytest.approx([1.0, 0.0, 4.0, 0.0, 1.0], abs=1e-9)
    assert not t.singular_parametrization
    # f~(x) = x^2 + 2x - 2
    for x in (0.5, 1.5, 3.0):
        assert s(x) == pytest.approx(x * x + 2 * x - 2, rel=1e-12)


def test_taylor_second_example():
    p = example_1b()
    s = taylor_series(p, 1, (2 / 3, 1 / SQRT3), 2)
    assert s.coefficients == pytest.approx([2 / 3, 0.0, 4.0], abs=1e-9)
    s = taylor_series(p, 0, (1.0, 0.0), 3)
    assert abs(s.coefficients[3]) <= 1e-9


def test_taylor_third_example():
    p = example_2()
    A = example_2_points()["A"]
    s = taylor_series(p, 0, A, 2)
    assert s.coefficients == pytest.approx([-14.0, 0.0, 23 / 3], abs=1e-8)


def test_taylor_along_folded_axis_matches_substituted_polynomial():
    # along z the curve gives f(z) = z^3 - 3z^2 - z + 4 exactly
    p = example_2()
    for name in "AB":
        c = example_2_points()[name]
        z0 = c[2]
        want = [z0 ** 3 - 3 * z0 ** 2 - z0 + 4, 3 * z0 ** 2 - 6 * z0 - 1, 3 * z0 - 3, 1.0]
        s = taylor_series(p, 2, c, 3)
        assert s.singular_parametrization and not s.extrapolated
        assert s.coefficients == pytest.approx(want, abs=1e-10)
        assert s.warnings


def test_extrapolation_path():
    p = example_2()
    A = example_2_points()["A"]
    s = taylor_series(p, 2, A, 3, cancel=False)
    assert s.extrapolated
    assert s.coefficients == pytest.approx([-14.0, 23.0, -9.0, 1.0], rel=1e-6, abs=1e-6)


def test_taylor_rejects_points_off_the_curve():
    with pytest.raises(NotOnCurveError):
        taylor_series(example_2(), 0, (0.0, 0.0, 0.0), 2)


def test_unrecoverable_singularity():
    # x^2 = y^3 has a cusp at the origin; no regular axis there
    p = Problem.from_strings("xy", "x + y", [("x^2 - y^3", 0)])
    with pytest.raises(SingularUnrecoverableError):
        taylor_series(p, 0, (0.0, 0.0), 2)


@pytest.mark.parametrize("name", EXAMPLES)
def test_coefficients_are_derivatives_over_factorials(name):
    p = EXAMPLES[name]()
    for sp in find_stationary(p):
        for k, a in enumerate(sp.axes):
            if not a.valid:
                continue
            s = taylor_series(p, k, sp.point, 4)
            for m, d in enumerate(curve_derivatives(p, k, 4), start=1):
                assert s.coefficients[m] == pytest.approx(evaluate(d, sp.point) / math.factorial(m),
                                                          rel=1e-12, abs=1e-15)


# --- curve tracing -------------------------------------------------------------------

def test_trace_first_example_along_x_stops_at_fold():
    p = example_1a()
    s = trace_curve(p, 0, (1.0, 0.0), 0.01, 50)
    assert s.truncated == {"low": True, "high": False}
    assert s.parameters[0] == 1.0 and len(s.points) == 51
    for x, y in s.points:
        assert abs(x - y * y - 1) <= 1e-10


def test_trace_linear_constraint():
    p = Problem.from_strings("xy", "x*y", [("x + y", 1)])
    s = trace_curve(p, 0, (0.0, 1.0), 0.1, 10)
    for x, y in s.points:
        assert y == pytest.approx(1 - x, abs=1e-15)


def test_trace_through_b_matches_parabola():
    p = example_2()
    B = example_2_points()["B"]
    s = trace_curve(p, 1, B, 1e-3, 50)
    assert s.truncated["high"]  # y has a maximum at B
    for y, fv in zip(s.parameters, s.f_values):
        assert fv == pytest.approx(1 - 2 * y + y * y / 2, abs=5 * abs(y) ** 3 + 1e-12)


def test_trace_rejects_start_off_curve():
    with pytest.raises(NotOnCurveError):
        trace_curve(example_1a(), 0, (0.0, 0.0), 0.1, 3)


def test_default_step():
    assert default_step(((-3, 3), (-3, 3))) == pytest.approx(6e-3)
    assert default_step(((-1e6, 1e6),)) == 1e-2
    assert default_step(((0, 1e-5),)) == 1e-6


# --- numeric oracle --------------------------------------------------------------------

def test_oracle_first_example():
    p = example_1a()
    s = trace_curve(p, 0, (1.0, 0.0), 1e-3, 20)  # only x >= 1 exists
    assert numeric_curve_derivatives(s, s.index_of(1.0), 2) == pytest.approx([4.0, 2.0], abs=1e-6)
    s = trace_curve(p, 0, (1.5, math.sqrt(0.5)), 1e-3, 20)
    d = numeric_curve_derivatives(s, s.index_of(1.5), 2)
    assert d == pytest.approx([2 * 2.5, 2.0], abs=1e-6)


def test_oracle_constant_function():
    p = Problem.from_strings("xy", "4", [("x^2 + y^2", 1)])
    s = trace_curve(p, 0, (0.0, 1.0), 1e-3, 10)
    assert numeric_curve_derivatives(s, 10, 3) == pytest.approx([0, 0, 0], abs=1e-9)


def test_oracle_at_a_along_y():
    # y peaks at A, so only the lower side exists
    p = example_2()
    A = example_2_points()["A"]
    s = trace_curve(p, 1, A, 1e-3, 12)
    assert s.truncated["high"]
    d = numeric_curve_derivatives(s, s.index_of(3.0), 2)
    assert d[1] == pytest.approx(-13 / 32, rel=1e-5)


def test_insufficient_stencil():
    s = CurveSample(0, [0.0, 1.0], [(0.0,), (1.0,)], [0.0, 1.0])
    with pytest.raises(InsufficientStencilError):
        numeric_curve_derivatives(s, 0, 1)
    s = CurveSample(0, [0.0, 1.0, 2.0], [(0.0,)] * 3, [0.0, 1.0, 4.0])
    with pytest.raises(InsufficientStencilError):
        numeric_curve_derivatives(s, 1, 3)


@pytest.mark.parametrize("name", EXAMPLES)
def test_symbolic_matches_oracle_at_stationary_points(name):
    p = EXAMPLES[name]()
    step = 1e-3
    for sp in find_stationary(p):
        for k, a in enumerate(sp.axes):
            if not a.valid:
                continue
            s = trace_curve(p, k, sp.point, step, 8)
            if any(s.truncated.values()):
                continue
            num = numeric_curve_derivatives(s, s.index_of(sp.point[k]), 2)
            for sym, est in zip((a.d1, a.d2), num):
                assert est == pytest.approx(sym, abs=max(1e-6, 1e-4 * abs(sym)))


@pytest.mark.parametrize("name, k", [("1a", 1), ("1b", 0), ("1b", 1), ("2", 1), ("2", 2)])
def test_symbolic_matches_oracle_on_random_curve_points(name, k, rng):
    p = EXAMPLES[name]()
    derivs = curve_derivatives(p, k, 3)
    for x in on_curve_points(p, k, 10, rng, box=(-2, 2)):
        s = trace_curve(p, k, x, 1e-3, 8)
        if any(s.truncated.values()):
            continue
        num = numeric_curve_derivatives(s, s.index_of(x[k]), 3)
        for m, (d, est) in enumerate(zip(derivs, num), start=1):
            sym = evaluate(d, x)
            tol = max(1e-6, 1e-4 * abs(sym)) if m < 3 else max(1e-3, 1e-3 * abs(sym))
            assert est == pytest.approx(sym, abs=tol), (m, x)


@pytest.mark.parametrize("name, k, center_of, order", [
    ("2", 0, lambda: example_2_points()["A"], 2),
    ("2", 0, lambda: example_2_points()["C"], 2),
    ("2", 0, lambda: example_2_points()["C"], 3),
    ("1a", 1, lambda: (1.0, 0.0), 2),
    ("1a", 1, lambda: (1.0, 0.0), 3),
    ("1b", 1, lambda: (2 / 3, 1 / SQRT3), 2),
    ("1b", 1, lambda: (2 / 3, 1 / SQRT3), 3),
    ("1a", 1, lambda: (1.0, 0.0), 1),
])
def test_truncation_error_slope(name, k, center_of, order):
    p = EXAMPLES[name]()
    c = np.asarray(center_of(), dtype=float)
    s = taylor_series(p, k, c, order)
    cs = curve_system(p)
    t = cs.tangent(c, k)
    errs = []
    for h in (1e-2, 1e-3):
        q = cs.solve_station(k, c[k] + h, c + t * h)
        errs.append(abs(s(q[k]) - cs.f(q)))
    slope = math.log10(errs[0] / errs[1])
    assert slope >= order + 0.5, (errs, slope)


def test_expression_size_stays_modest():
    p = example_2()
    for k in range(3):
        for d in curve_derivatives(p, k, 4):
            assert node_count(d) < 2000


def test_curve_derivative_requires_positive_order():
    with pytest.raises(ValueError):
        curve_derivative(example_1a(), 0, 0)
