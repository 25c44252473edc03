"""Rational-function cancellation for Exprs, backed by sympy.

Non-polynomial pieces (function applications, non-integer powers) are
frozen into opaque generators before cancelling, so sympy only ever sees
a rational function of variables and generators.
"""

from __future__ import annotations

from fractions import Fraction

import sympy

from .expr import (
    ADD, CONST, DIV, MUL, NEG, POW, SUB, VAR, Expr, ONE, ZERO,
    add, const, div, mul, neg, pow_, postorder, sub, var,
)

MAX_NODES = 4000


def _to_sympy(e: Expr):
    syms: dict[int, sympy.Symbol] = {}
    opaque: dict[sympy.Symbol, Expr] = {}
    memo: dict[int, object] = {}
    for n in postorder([e]):
        k = n.kind
        if k == CONST:
            r = sympy.Rational(Fraction(n.value).numerator, Fraction(n.value).denominator)
        elif k == VAR:
            if n.value not in syms:
                syms[n.value] = sympy.Symbol(f"x{n.value}")
            r = syms[n.value]
        elif k == NEG:
            r = -memo[id(n.args[0])]
        elif k == ADD:
            r = memo[id(n.args[0])] + memo[id(n.args[1])]
        elif k == SUB:
            r = memo[id(n.args[0])] - memo[id(n.args[1])]
        elif k == MUL:
            r = memo[id(n.args[0])] * memo[id(n.args[1])]
        elif k == DIV:
            r = memo[id(n.args[0])] / memo[id(n.args[1])]
        elif k == POW and n.args[1].kind == CONST and n.args[1].value == int(n.args[1].value) \
                and abs(n.args[1].value) <= 64:
            r = memo[id(n.args[0])] ** int(n.args[1].value)
        else:
            g = sympy.Symbol(f"g{len(opaque)}")
            opaque[g] = n
            r = g
        memo[id(n)] = r
    return memo[id(e)], syms, opaque


def _coeff(c) -> Expr:
    return const(float(Fraction(int(c.p), int(c.q))))


def _poly_to_expr(poly: sympy.Poly, back: dict) -> Expr:
    gens = [back[g] for g in poly.gens]
    out = ZERO
    for monom, c in poly.terms():
        term = ONE
        for g, p in zip(gens, monom):
            if p:
                term = mul(term, g if p == 1 else pow_(g, const(p)))
        if c < 0:
            out = sub(out, mul(_coeff(-c), term)) if out is not ZERO else neg(mul(_coeff(-c), term))
        else:
            out = add(out, mul(_coeff(c), term))
    return out


def cancel(e: Expr, max_nodes: int = MAX_NODES) -> Expr:
    """Divide out common polynomial factors of numerator and denominator.

    Returns ``e`` unchanged when it is too large to canonicalise cheaply.
    """
    if e.kind in (CONST, VAR) or len(postorder([e])) > max_nodes:
        return e
    s, syms, opaque = _to_sympy(e)
    if s.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
        return e  # division by an exact zero: nothing to cancel
    back = {sym: var(i) for i, sym in syms.items()}
    back.update(opaque)
    num, den = sympy.fraction(sympy.cancel(sympy.together(s)))
    gens = sorted(back, key=lambda g: g.name)
    if not gens:
        return const(float(num / den))
    pn = sympy.Poly(num, *gens)
    pd = sympy.Poly(den, *gens)
    top = _poly_to_expr(pn, back)
    if pd.is_ground:
        c = pd.LC()
        if c == 1:
            return top
        return div(top, _coeff(c))
    return div(top, _poly_to_expr(pd, back))


def is_identically_zero(e: Expr) -> bool:
    """Exact zero test after rational canonicalisation (opaque pieces frozen)."""
    if e is ZERO:
        return True
    if len(postorder([e])) > 20 * MAX_NODES:
        return False
    s, _, _ = _to_sympy(e)
    if s.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
        return False
    return sympy.cancel(sympy.together(s)) == 0
