"""Acceptance criteria: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from ceqopt.expr import evaluate
from ceqopt.lagrange import cross_validate, find_stationary_lagrange
from ceqopt.matrix import constraint_jacobian, determinant, infinitesimal_coeffs, problem_jacobian
from ceqopt.report import emit_report, run
from ceqopt.solver import SolverConfig
from ceqopt.stationary import classify, find_boundaries, find_stationary, lagrange_residual
from ceqopt.taylor import curve_derivative, numeric_curve_derivatives, taylor_series, trace_curve

from conftest import SQRT3, example_1a, example_1b, example_2, example_2_points, on_curve_points
from test_lagrange import RANDOM_CASES, random_case
from test_matrix import PROBLEMS, _nonsingular_points


@pytest.fixture
def verdict(request, capsys):
    """Print 'criterion N: PASS|FAIL  title' whatever the outcome."""
    def check(number: int, title: str, body):
        try:
            body()
        except BaseException:
            with capsys.disabled():
                print(f"\ncriterion {number:2d}: FAIL  {title}")
            raise
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: PASS  {title}")
    return check


def _same_set(got, want, tol: float) -> None:
    got = sorted(tuple(g) for g in got)
    want = sorted(tuple(w) for w in want)
    assert len(got) == len(want), (got, want)
    for g, w in zip(got, want):
        assert max(abs(a - b) for a, b in zip(g, w)) <= tol, (g, w)


def _close(got, want, tol: float) -> None:
    assert len(got) == len(want)
    for a, b in zip(got, want):
        assert abs(a - b) <= tol, (got, want)


# --- 1 ---------------------------------------------------------------------------------

def test_criterion_01_first_example_solve(verdict):
    def body():
        p = example_1a()
        pts = find_stationary(p)
        _same_set([sp.point for sp in pts], [(1.0, 0.0)], 1e-8)
        assert abs(pts[0].f_value - 1.0) <= 1e-8
        d = determinant(problem_jacobian(p.f, p.g))
        rng = np.random.default_rng(1)
        for x, y in rng.uniform(-3, 3, size=(100, 2)):
            want = -4 * x * y - 4 * y
            assert abs(evaluate(d, (x, y)) - want) <= 1e-9 * abs(want)
        found, unbounded = find_boundaries(p)
        _same_set([b.point for b in found[0]], [(1.0, 0.0)], 1e-8)
        assert [u.axis for u in unbounded] == [1] and found[1] == []
    verdict(1, "Example 1a: single stationary point, determinant, boundaries", body)


# --- 2 ---------------------------------------------------------------------------------

def test_criterion_02_first_example_taylor(verdict):
    def body():
        p = example_1a()
        s = taylor_series(p, 0, (1.0, 0.0), 3)
        _close(s.coefficients[:3], [1.0, 4.0, 1.0], 1e-10)
        assert abs(s.coefficients[3]) <= 1e-9
        t = taylor_series(p, 1, (1.0, 0.0), 2)
        _close(t.coefficients, [1.0, 0.0, 4.0], 1e-9)
    verdict(2, "Example 1a Taylor: x -> [1, 4, 1] with c3 = 0, y -> 1 + 4y^2", body)


# --- 3 ---------------------------------------------------------------------------------

def test_criterion_03_second_example(verdict):
    def body():
        p = example_1b()
        pts = find_stationary(p)
        _same_set([sp.point for sp in pts], [(1.0, 0.0), (2 / 3, 1 / SQRT3), (2 / 3, -1 / SQRT3)], 1e-8)
        _close(sorted(sp.f_value for sp in pts), [2 / 3, 2 / 3, 1.0], 1e-8)
        for sp in pts:
            assert abs(sp.axes[0].d2 - 6.0) <= 1e-9
        s = taylor_series(p, 1, (2 / 3, 1 / SQRT3), 2)
        _close(s.coefficients, [2 / 3, 0.0, 4.0], 1e-9)
    verdict(3, "Example 1b: three stationary points, f''_x = 6, Taylor along y at B", body)


# --- 4 ---------------------------------------------------------------------------------

def test_criterion_04_third_example_points(verdict):
    def body():
        p = example_2()
        pts = find_stationary(p)
        closed = example_2_points()
        assert closed["C"][0] == -math.sqrt(2 * SQRT3 - 4 / 3)
        _same_set([sp.point for sp in pts], closed.values(), 1e-8)
        fc = 1 + 16 / (3 * SQRT3)
        _close(sorted(sp.f_value for sp in pts), sorted([-14.0, 1.0, fc, fc]), 1e-8)
    verdict(4, "Example 2: four stationary points A, B, C, D and their f-values", body)


# --- 5 ---------------------------------------------------------------------------------

def test_criterion_05_third_example_boundaries(verdict):
    def body():
        found, unbounded = find_boundaries(example_2())
        assert unbounded == []
        r2 = math.sqrt(2)
        _same_set([b.point for b in found[0]], [(1.5, -0.75, -0.5), (-1.5, -0.75, -0.5)], 1e-8)
        _same_set([b.point for b in found[1]], [(0, 3, -2), (0, 0, 1), (r2, -1, 0), (-r2, -1, 0)], 1e-8)
        _same_set([b.point for b in found[2]], [(0, 3, -2), (0, 0, 1)], 1e-8)
        distinct: list = []
        for b in itertools.chain(*found.values()):
            if all(max(abs(u - v) for u, v in zip(b.point, q)) > 1e-8 for q in distinct):
                distinct.append(b.point)
        assert len(distinct) == 6
    verdict(5, "Example 2 boundaries per axis, six distinct points", body)


# --- 6 ---------------------------------------------------------------------------------

def _oracle(p, k: int, x, order: int) -> float:
    s = trace_curve(p, k, x, 1e-3, 8)
    assert not any(s.truncated.values()), x
    return numeric_curve_derivatives(s, s.index_of(x[k]), order)[order - 1]


def test_criterion_06_curve_derivatives(verdict):
    def body():
        p = example_2()
        rng = np.random.default_rng(6)
        d1y, d2z = curve_derivative(p, 1, 1), curve_derivative(p, 2, 2)
        # finite differences need a regular neighbourhood: keep clear of the folds
        # in y (z = 0) and in z (x = 0)
        pts = on_curve_points(p, 1, 20, rng, reject=lambda q: abs(q[2]) < 0.3 or abs(q[0]) < 0.3)
        for x in pts:
            z = x[2]
            want_y = 3 * z / 2 - 1 / (2 * z) - 3
            want_z = 6 * (z - 1)
            assert abs(evaluate(d1y, x) - want_y) <= 1e-12 * max(1.0, abs(want_y))
            assert abs(evaluate(d2z, x) - want_z) <= 1e-12 * max(1.0, abs(want_z))
            assert abs(_oracle(p, 1, x, 1) - want_y) <= 1e-5 * abs(want_y)
            assert abs(_oracle(p, 2, x, 2) - want_z) <= 1e-5 * abs(want_z)
        s = taylor_series(p, 0, example_2_points()["A"], 2)
        _close(s.coefficients, [-14.0, 0.0, 23 / 3], 1e-8)
    verdict(6, "Example 2 curve derivatives vs traced finite differences, Taylor at A", body)


# --- 7 ---------------------------------------------------------------------------------

def test_criterion_07_lagrange_equivalence(verdict):
    def check(p, det, lag):
        rep = cross_validate(det, lag, tol=1e-7, problem=p)
        assert rep.lagrange_only == [], rep.lagrange_only
        for d, res, rank_def in rep.det_only:
            assert rank_def, (d, res)
        for sp in det:
            res, _, smin = lagrange_residual(p, sp.point)
            if smin > 1e-8:
                assert res <= 1e-7, (sp.point, res)
        return len(rep.matched)

    def body():
        counts = []
        for make in (example_1a, example_1b, example_2):
            p = make()
            counts.append(check(p, find_stationary(p), find_stationary_lagrange(p)))
        assert counts == [1, 3, 4]
        for seed, n in RANDOM_CASES:
            check(*random_case(seed, n))
    verdict(7, "Lagrange and determinant root sets agree (examples + 25 random problems)", body)


# --- 8 ---------------------------------------------------------------------------------

def test_criterion_08_infinitesimal_coefficients(verdict):
    def body():
        rng = np.random.default_rng(8)
        for i_p, p in enumerate(PROBLEMS):
            coeffs, pts = _nonsingular_points(p, rng, 100)
            jg = constraint_jacobian(p.g)
            for pt in pts:
                S = np.array([c.values(pt) for c in coeffs])  # S[k, i] = s_{i,k}
                for i, k in itertools.permutations(range(p.n), 2):
                    assert abs(S[k, i] * S[i, k] - 1.0) <= 1e-9
                for i, j, k in itertools.permutations(range(p.n), 3):
                    want = S[k, i] * S[j, k]
                    assert abs(S[j, i] - want) <= 1e-9 * abs(want) + 1e-12
                J = jg.evaluate(pt)
                for k in range(p.n):
                    others = [i for i in range(p.n) if i != k]
                    r = J[:, k] + J[:, others] @ S[k, others]
                    # worked examples absolute; random polynomials relative to the column scale
                    scale = 1.0 if i_p < 3 else 1.0 + np.abs(J[:, k]).max()
                    assert np.max(np.abs(r)) <= 1e-10 * scale
    verdict(8, "Reciprocity, chain rule and the defining linear system", body)


# --- 9 ---------------------------------------------------------------------------------

def test_criterion_09_second_derivative_transport(verdict):
    def body():
        checked = 0
        for make in (example_1a, example_1b, example_2):
            p = make()
            jg = constraint_jacobian(p.g)
            for sp in find_stationary(p):
                valid = [a for a in sp.axes if a.valid]
                for a, b in itertools.permutations(valid, 2):
                    s_kj = infinitesimal_coeffs(jg, b.axis).values(sp.point)[a.axis]
                    want = a.d2 * s_kj ** 2
                    assert abs(b.d2 - want) <= 1e-6 * abs(want)
                    checked += 1
        assert checked > 0
        sp = classify((2 / 3, 1 / SQRT3), example_1b())
        assert abs(sp.axes[1].d2 - 8.0) <= 1e-9 and abs(sp.axes[0].d2 - 6.0) <= 1e-9
    verdict(9, "Second-derivative transport between regular axes (8 = 6 * 4/3 at B)", body)


# --- 10 --------------------------------------------------------------------------------

def test_criterion_10_determinism(verdict):
    def body():
        p = example_2()
        runs = [emit_report(run("all", p, SolverConfig(box=p.search_box(), rng_seed=0)), "json")
                for _ in range(2)]
        assert runs[0] == runs[1]
        assert len(runs[0]) > 1000
    verdict(10, "Two full Example 2 runs give byte-identical JSON", body)
