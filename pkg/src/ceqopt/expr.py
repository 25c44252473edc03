"""Immutable symbolic expressions.

Nodes are hash-consed: two structurally equal expressions are the same
object, so equality is identity and large derivative DAGs share subtrees
for free.  Variables are referenced by index into an externally owned
name list.
"""

from __future__ import annotations

import math
import threading
import weakref
from typing import Sequence

CONST = "const"
VAR = "var"
NEG = "neg"
ADD = "add"
SUB = "sub"
MUL = "mul"
DIV = "div"
POW = "pow"
FUNC = "func"

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}

BINARY = (ADD, SUB, MUL, DIV, POW)


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax error in an expression string; ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        ParseError.__init__(self, f"unknown identifier {name!r}", offset)
        self.name = name


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain of an operation."""

    def __init__(self, kind: str, point=None):
        where = "" if point is None else f" at {tuple(float(v) for v in point)}"
        super().__init__(f"domain error in {kind}{where}")
        self.kind = kind
        self.point = None if point is None else tuple(float(v) for v in point)


_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_lock = threading.Lock()


class Expr:
    __slots__ = ("kind", "value", "args", "_hash", "_tape", "__weakref__")

    kind: str
    value: object
    args: tuple

    def __new__(cls, kind: str, value=None, args: tuple = ()):
        if kind == CONST:
            value = float(value)
            if not math.isfinite(value):
                raise ExprError(f"non-finite constant {value!r}")
            # 0.0 and -0.0 compare equal; keep one canonical zero
            key = (kind, value + 0.0, ())
        else:
            key = (kind, value, tuple(id(a) for a in args))
        with _lock:
            node = _table.get(key)
            if node is not None:
                return node
            node = object.__new__(cls)
            object.__setattr__(node, "kind", kind)
            object.__setattr__(node, "value", value + 0.0 if kind == CONST else value)
            object.__setattr__(node, "args", tuple(args))
            object.__setattr__(node, "_hash", hash(key))
            object.__setattr__(node, "_tape", None)
            _table[key] = node
        return node

    def __setattr__(self, name, value):
        if name == "_tape":
            object.__setattr__(self, name, value)
            return
        raise AttributeError("Expr is immutable")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __reduce__(self):
        return (Expr, (self.kind, self.value, self.args))

    def __repr__(self):
        if self.kind == CONST:
            return f"Const({self.value!r})"
        if self.kind == VAR:
            return f"Var({self.value})"
        if self.kind == FUNC:
            return f"{self.value}({self.args[0]!r})"
        return f"{self.kind}({', '.join(repr(a) for a in self.args)})"

    def __str__(self):
        return to_text(self, canonical=False)

    @property
    def is_const(self) -> bool:
        return self.kind == CONST

    def is_value(self, v: float) -> bool:
        return self.kind == CONST and self.value == v


# --- raw constructors (no rewriting) ---------------------------------------

def const(v: float) -> Expr:
    return Expr(CONST, v)


def var(i: int) -> Expr:
    if i < 0:
        raise ExprError("variable index must be non-negative")
    return Expr(VAR, int(i))


def raw(kind: str, *args: Expr, name: str | None = None) -> Expr:
    if kind == FUNC:
        if name not in FUNCTIONS:
            raise ExprError(f"unknown function {name!r}")
        return Expr(FUNC, name, args)
    return Expr(kind, None, args)


ZERO = const(0.0)
ONE = const(1.0)


# --- scalar semantics shared by folding and evaluation ---------------------

def apply_pow(a: float, b: float) -> float:
    """Power with the artifact's domain contract.

    Integral exponents use libm ``pow``; other exponents go through
    ``exp(b*log(a))`` and so need a strictly positive base.
    """
    if b == int(b):
        if a == 0.0 and b < 0:
            raise DomainError(POW)
        return math.pow(a, b)
    if a <= 0.0:
        raise DomainError(POW)
    return math.exp(b * math.log(a))


def apply_func(name: str, a: float) -> float:
    if name == "sin":
        return math.sin(a)
    if name == "cos":
        return math.cos(a)
    if name == "tan":
        return math.tan(a)
    if name == "exp":
        return math.exp(a) if a < 709.78 else math.inf
    if name == "log":
        if a <= 0.0:
            raise DomainError("log")
        return math.log(a)
    if name == "sqrt":
        if a < 0.0:
            raise DomainError("sqrt")
        return math.sqrt(a)
    raise ExprError(f"unknown function {name!r}")


def apply_binary(kind: str, a: float, b: float) -> float:
    if kind == ADD:
        return a + b
    if kind == SUB:
        return a - b
    if kind == MUL:
        return a * b
    if kind == DIV:
        if b == 0.0:
            raise DomainError(DIV)
        return a / b
    return apply_pow(a, b)


def _fold(fn, *args) -> Expr | None:
    try:
        v = fn(*args)
    except (DomainError, OverflowError, ValueError):
        return None
    if not math.isfinite(v):
        return None
    return const(v)


# --- simplifying constructors ----------------------------------------------

def neg(a: Expr) -> Expr:
    if a.kind == CONST:
        return const(-a.value)
    if a.kind == NEG:
        return a.args[0]
    return Expr(NEG, None, (a,))


def add(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        return const(a.value + b.value)
    if a.is_value(0.0):
        return b
    if b.is_value(0.0):
        return a
    if b.kind == NEG:
        return sub(a, b.args[0])
    return Expr(ADD, None, (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        return const(a.value - b.value)
    if b.is_value(0.0):
        return a
    if a.is_value(0.0):
        return neg(b)
    if b.kind == NEG:
        return add(a, b.args[0])
    return Expr(SUB, None, (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        return const(a.value * b.value)
    if a.is_value(0.0) or b.is_value(0.0):
        return ZERO
    if a.is_value(1.0):
        return b
    if b.is_value(1.0):
        return a
    if a.is_value(-1.0):
        return neg(b)
    if b.is_value(-1.0):
        return neg(a)
    if a.kind == NEG and b.kind == NEG:
        return mul(a.args[0], b.args[0])
    return Expr(MUL, None, (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        folded = _fold(apply_binary, DIV, a.value, b.value)
        if folded is not None:
            return folded
    if b.is_value(1.0):
        return a
    if b.is_value(-1.0):
        return neg(a)
    if a.kind == NEG and b.kind == NEG:
        return div(a.args[0], b.args[0])
    return Expr(DIV, None, (a, b))


def pow_(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        folded = _fold(apply_pow, a.value, b.value)
        if folded is not None:
            return folded
    if b.is_value(1.0):
        return a
    if b.is_value(0.0) or a.is_value(1.0):
        return ONE
    return Expr(POW, None, (a, b))


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if a.kind == CONST:
        folded = _fold(apply_func, name, a.value)
        if folded is not None:
            return folded
    return Expr(FUNC, name, (a,))


_BUILD = {ADD: add, SUB: sub, MUL: mul, DIV: div, POW: pow_}


def rebuild(e: Expr, args: Sequence[Expr]) -> Expr:
    """Reconstruct ``e`` with new children through the simplifying constructors."""
    if e.kind == NEG:
        return neg(args[0])
    if e.kind == FUNC:
        return func(e.value, args[0])
    if e.kind in _BUILD:
        return _BUILD[e.kind](args[0], args[1])
    return e


def total(terms: Sequence[Expr]) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


# --- traversal helpers -------------------------------------------------------

def postorder(roots: Sequence[Expr]) -> list[Expr]:
    """Unique nodes reachable from ``roots``, children before parents."""
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def node_count(e: Expr) -> int:
    return len(postorder([e]))


def variables(e: Expr) -> set[int]:
    return {n.value for n in postorder([e]) if n.kind == VAR}


def depends_on(e: Expr, k: int) -> bool:
    return k in variables(e)


def substitute(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Replace variables by expressions (used to re-index variable spaces)."""
    memo: dict[int, Expr] = {}
    for node in postorder([e]):
        if node.kind == VAR:
            memo[id(node)] = mapping.get(node.value, node)
        elif node.args:
            memo[id(node)] = rebuild(node, [memo[id(a)] for a in node.args])
        else:
            memo[id(node)] = node
    return memo[id(e)]


def simplify(e: Expr) -> Expr:
    """Constant folding and identity elimination, repeated to a fixpoint."""
    while True:
        memo: dict[int, Expr] = {}
        for node in postorder([e]):
            if node.args:
                memo[id(node)] = rebuild(node, [memo[id(a)] for a in node.args])
            else:
                memo[id(node)] = node
        out = memo[id(e)]
        if out is e:
            return out
        e = out


# --- differentiation ---------------------------------------------------------

def differentiate(e: Expr, k: int) -> Expr:
    """Exact partial derivative with respect to variable ``k``."""
    d: dict[int, Expr] = {}
    for n in postorder([e]):
        kind = n.kind
        if kind == CONST:
            r = ZERO
        elif kind == VAR:
            r = ONE if n.value == k else ZERO
        elif kind == NEG:
            r = neg(d[id(n.args[0])])
        elif kind in (ADD, SUB):
            a, b = d[id(n.args[0])], d[id(n.args[1])]
            r = add(a, b) if kind == ADD else sub(a, b)
        elif kind == MUL:
            u, v = n.args
            r = add(mul(d[id(u)], v), mul(u, d[id(v)]))
        elif kind == DIV:
            u, v = n.args
            du, dv = d[id(u)], d[id(v)]
            if dv is ZERO:
                r = div(du, v)
            else:
                r = div(sub(mul(du, v), mul(u, dv)), pow_(v, const(2.0)))
        elif kind == POW:
            u, v = n.args
            du, dv = d[id(u)], d[id(v)]
            if dv is ZERO:
                if v.kind == CONST:
                    lowered = pow_(u, const(v.value - 1.0))
                else:
                    lowered = pow_(u, sub(v, ONE))
                r = mul(mul(v, lowered), du)
            else:
                r = mul(n, add(mul(dv, func("log", u)), div(mul(v, du), u)))
        else:
            u = n.args[0]
            du = d[id(u)]
            if du is ZERO:
                r = ZERO
            else:
                r = mul(_func_derivative(n.value, u, n), du)
        d[id(n)] = r
    return simplify(d[id(e)])


def _func_derivative(name: str, u: Expr, node: Expr) -> Expr:
    if name == "sin":
        return func("cos", u)
    if name == "cos":
        return neg(func("sin", u))
    if name == "tan":
        return div(ONE, pow_(func("cos", u), const(2.0)))
    if name == "exp":
        return node
    if name == "log":
        return div(ONE, u)
    return div(ONE, mul(const(2.0), node))


def gradient(e: Expr, n: int) -> list[Expr]:
    return [differentiate(e, k) for k in range(n)]


# --- evaluation --------------------------------------------------------------

def evaluate(e: Expr, point: Sequence[float]) -> float:
    """Evaluate at ``point``; raises :class:`DomainError` instead of returning NaN."""
    from .kernels import compile_exprs, eval_tape

    tape = e._tape
    if tape is None:
        tape = compile_exprs([e])
        e._tape = tape
    if tape.n_vars > len(point):
        raise ExprError(f"point has {len(point)} coordinates, expression needs {tape.n_vars}")
    return eval_tape(tape, point)[0]


# --- printing ---------------------------------------------------------------

_PREC = {ADD: 1, SUB: 1, MUL: 2, DIV: 2}


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(e: Expr, names: Sequence[str] | None = None, canonical: bool = True) -> str:
    """Print in the parser's grammar.

    With ``canonical`` (default) the simplified form is printed, so that
    ``parse(to_text(e)) is simplify(e)``.
    """
    if canonical:
        e = simplify(e)
    memo: dict[int, str] = {}

    def name_of(i: int) -> str:
        if names is not None and i < len(names):
            return names[i]
        return f"x{i}"

    def is_atom(n: Expr) -> bool:
        return n.kind in (VAR, FUNC) or (n.kind == CONST and n.value >= 0)

    def wrap(n: Expr) -> str:
        s = memo[id(n)]
        return s if is_atom(n) else f"({s})"

    for n in postorder([e]):
        k = n.kind
        if k == CONST:
            s = _fmt_number(n.value)
        elif k == VAR:
            s = name_of(n.value)
        elif k == FUNC:
            s = f"{n.value}({memo[id(n.args[0])]})"
        elif k == NEG:
            c = n.args[0]
            # "-2" would re-parse as a negative literal, "-a*b" as (-a)*b
            if c.kind in (ADD, SUB, MUL, DIV) or c.kind == CONST:
                s = f"-({memo[id(c)]})"
            else:
                s = f"-{memo[id(c)]}"
        elif k == POW:
            s = f"{wrap(n.args[0])}^{wrap(n.args[1])}"
        else:
            a, b = n.args
            p = _PREC[k]
            left = memo[id(a)]
            if a.kind in _PREC and _PREC[a.kind] < p:
                left = f"({left})"
            right = memo[id(b)]
            if b.kind in _PREC and (_PREC[b.kind] < p or (_PREC[b.kind] == p and k in (SUB, DIV, MUL, ADD))):
                right = f"({right})"
            elif b.kind == NEG or (b.kind == CONST and b.value < 0):
                right = f"({right})"
            op = {ADD: "+", SUB: "-", MUL: "*", DIV: "/"}[k]
            s = f"{left} {op} {right}"
        memo[id(n)] = s
    return memo[id(e)]
