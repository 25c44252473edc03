from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from ceqopt.expr import (
    ADD, MUL, POW, VAR, DomainError, ExprError, ParseError, UnknownIdentifierError,
    add, const, differentiate, div, evaluate, func, mul, neg, pow_, raw, simplify, sub, to_text, var,
)
from ceqopt.parse import parse


# --- parsing -------------------------------------------------------------------------

def test_parse_objective_of_first_example():
    e = parse("x^2 + 2*y^2", ["x", "y"])
    expected = raw(ADD, raw(POW, var(0), const(2)), raw(MUL, const(2), raw(POW, var(1), const(2))))
    assert e is expected


def test_parse_single_variable():
    assert parse("x", ["x"]) is var(0)


def test_unknown_identifier_is_named():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("x + q", ["x", "y"])
    assert info.value.name == "q"
    assert info.value.offset == 4


@pytest.mark.parametrize("text, offset", [("x +", 3), ("(x", 2), ("x $ y", 2), ("x y", 2), ("2*", 2)])
def test_syntax_errors_carry_byte_offset(text, offset):
    with pytest.raises(ParseError) as info:
        parse(text, ["x", "y"])
    assert info.value.offset == offset


def test_offset_counts_bytes_not_characters():
    with pytest.raises(ParseError) as info:
        parse("é", ["x"])
    assert info.value.offset == 0
    with pytest.raises(ParseError) as info:
        parse("x + é", ["x"])
    assert info.value.offset == 4


@pytest.mark.parametrize("text, point, value", [
    ("2^3^2", (), 512.0),                # right associative
    ("-x^2", (3.0,), -9.0),              # power binds tighter than unary minus
    ("x^-1", (4.0,), 0.25),
    ("2*-x", (3.0,), -6.0),
    ("8/4/2", (), 1.0),                   # left associative
    ("1 - 2 - 3", (), -4.0),
    ("sin(pi/2) + log(e)", (), 2.0),
    ("sqrt(16) * exp(0)", (), 4.0),
    ("1.5e1 + .5", (), 15.5),
])
def test_precedence_and_values(text, point, value):
    names = ["x"] if point else []
    assert evaluate(parse(text, names), point) == pytest.approx(value, rel=1e-15)


def test_variable_shadows_named_constant():
    assert parse("e", ["e"]) is var(0)


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        parse("x", ["x", "x"])


# --- evaluation ---------------------------------------------------------------------------

def test_evaluate_example_points():
    f1 = parse("x^2 + 2*y^2", "xy")
    assert evaluate(f1, (1.0, 0.0)) == 1.0
    f2 = parse("x^2 + 2*y^2 - 2*x*y^2", "xy")
    assert evaluate(f2, (2 / 3, 1 / math.sqrt(3))) == pytest.approx(2 / 3, abs=1e-15)
    assert evaluate(const(7.0), (5.0, -1.0)) == 7.0


@pytest.mark.parametrize("text, point, kind", [
    ("log(x)", (0.0,), "log"),
    ("log(x)", (-1.0,), "log"),
    ("sqrt(x)", (-1.0,), "sqrt"),
    ("1/x", (0.0,), "div"),
    ("x^0.5", (-1.0,), "pow"),
    ("x^-1", (0.0,), "pow"),
])
def test_domain_errors_are_signalled(text, point, kind):
    with pytest.raises(DomainError) as info:
        evaluate(parse(text, ["x"]), point)
    assert info.value.kind == kind
    assert tuple(info.value.point) == point


def test_integral_power_of_negative_base():
    assert evaluate(parse("x^3", ["x"]), (-2.0,)) == -8.0
    assert evaluate(parse("x^(1+1)", ["x"]), (-3.0,)) == 9.0


def test_point_too_short():
    with pytest.raises(ExprError):
        evaluate(var(2), (1.0,))


# --- differentiation ---------------------------------------------------------------------

def test_partials_of_first_example():
    f = parse("x^2 + 2*y^2", "xy")
    g = parse("x - y^2", "xy")
    assert to_text(differentiate(f, 0), "xy") == "2 * x"
    assert to_text(differentiate(g, 1), "xy") == "-(2 * y)"
    assert differentiate(const(3.0), 0) is const(0.0)


def _random_expr(rnd: random.Random, depth: int, n: int):
    """Expressions that stay finite on [-1, 1]^n (safe denominators and arguments)."""
    if depth == 0 or rnd.random() < 0.2:
        if rnd.random() < 0.7:
            return var(rnd.randrange(n))
        return const(float(rnd.randint(-3, 3)) or 1.0)
    a = _random_expr(rnd, depth - 1, n)
    choice = rnd.randrange(10)
    if choice == 0:
        return neg(a)
    b = _random_expr(rnd, depth - 1, n)
    if choice == 1:
        return add(a, b)
    if choice == 2:
        return sub(a, b)
    if choice == 3:
        return mul(a, b)
    if choice == 4:
        return div(a, add(const(1.0), mul(b, b)))
    if choice == 5:
        return pow_(func("sin", a), const(float(rnd.randint(2, 3))))
    if choice == 6:
        return func(rnd.choice(["sin", "cos"]), a)
    if choice == 7:
        return func("exp", func("sin", a))
    if choice == 8:
        return func(rnd.choice(["log", "sqrt"]), add(const(1.0), mul(a, a)))
    return pow_(add(const(2.0), func("cos", a)), func("sin", b))  # non-integer exponent


def test_derivatives_match_central_differences():
    rnd = random.Random(2024)
    h = 1e-6
    checked = 0
    for _ in range(1000):
        n = rnd.randint(1, 3)
        e = _random_expr(rnd, 6, n)
        k = rnd.randrange(n)
        p = [rnd.uniform(-1, 1) for _ in range(n)]
        d = evaluate(differentiate(e, k), p)
        lo, hi = list(p), list(p)
        lo[k] -= h
        hi[k] += h
        fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
        assert abs(d - fd) <= 1e-5 * (1 + abs(d)), (to_text(e), k, p, d, fd)
        checked += 1
    assert checked == 1000


# --- simplification ----------------------------------------------------------------------

def test_simplify_examples():
    x, y = var(0), var(1)
    assert simplify(raw(ADD, raw(MUL, const(0), y), x)) is x
    assert simplify(raw(MUL, const(2), const(3))) is const(6.0)
    assert simplify(raw(POW, x, const(1))) is x
    assert simplify(raw(POW, x, const(0))) is const(1.0)
    assert simplify(raw(MUL, x, const(1))) is x
    assert simplify(raw("neg", raw("neg", x))) is x


def _ulp_close(a: float, b: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= math.ulp(max(abs(a), abs(b)))


_names = ["x", "y"]
_leaf = st.one_of(st.sampled_from(["x", "y", "0", "1", "2", "-1", "0.5"]))


def _compose(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"({t[0]} {t[1]} {t[2]})")
    unary = children.map(lambda c: f"-({c})")
    funcs = st.tuples(st.sampled_from(["sin", "cos", "exp", "sqrt", "log", "tan"]), children).map(
        lambda t: f"{t[0]}({t[1]})")
    return st.one_of(binop, unary, funcs)


expr_text = st.recursive(_leaf, _compose, max_leaves=12)
coord = st.floats(min_value=-3, max_value=3, allow_nan=False)


@settings(max_examples=300, deadline=None, derandomize=True)
@given(expr_text, coord, coord)
def test_simplify_preserves_values(text, a, b):
    e = parse(text, _names)
    s = simplify(e)
    try:
        v = evaluate(e, (a, b))
        w = evaluate(s, (a, b))
    except DomainError:
        return
    if math.isfinite(v) and math.isfinite(w):
        assert _ulp_close(v, w), (text, v, w)


@settings(max_examples=300, deadline=None, derandomize=True)
@given(expr_text)
def test_print_parse_round_trip(text):
    e = parse(text, _names)
    assert parse(to_text(e, _names), _names) is simplify(e)


def test_round_trip_of_awkward_shapes():
    x, y = var(0), var(1)
    for e in [sub(x, neg(y)), sub(x, sub(y, x)), div(x, mul(y, x)), pow_(neg(x), const(2)),
              pow_(x, pow_(y, const(2))), pow_(pow_(x, y), const(2)), mul(const(-2.0), x),
              sub(x, const(-3.0)), pow_(const(-2.0), x), neg(add(x, y)), const(0.1), const(1e-300)]:
        assert parse(to_text(e, _names), _names) is simplify(e), to_text(e, _names)


def test_structural_sharing_and_immutability():
    a = add(var(0), const(1.0))
    b = add(var(0), const(1.0))
    assert a is b
    with pytest.raises(AttributeError):
        a.kind = VAR
