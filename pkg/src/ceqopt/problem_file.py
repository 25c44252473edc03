"""Line-oriented problem files.

    vars: x, y, z
    f: x^2 - 2*y + z^3
    g: x^2 + y + z = 1
    g: y - z^2 = -1
    box: -3 3          # or per variable: box x: -3 3
"""

from __future__ import annotations

import math
import re
from pathlib import Path

from .expr import FUNCTIONS, ExprError, ParseError, evaluate, variables
from .parse import parse
from .problem import Problem, ProblemError

_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")
DEFAULT_INTERVAL = (-3.0, 3.0)


class ProblemFileError(ProblemError):
    def __init__(self, message: str, line: int | None = None, source: str = "<string>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


def _constant(text: str, lineno: int, source: str) -> float:
    try:
        e = parse(text, ())
        if variables(e):
            raise ParseError("not a constant", 0)
        v = evaluate(e, ())
    except ExprError as exc:
        raise ProblemFileError(f"bad number {text.strip()!r}: {exc}", lineno, source) from None
    if not math.isfinite(v):
        raise ProblemFileError(f"non-finite number {text.strip()!r}", lineno, source)
    return v


def parse_problem(text: str, source: str = "<string>") -> Problem:
    names = None
    f_text = None
    cons: list[tuple[str, str, int]] = []
    uniform = None
    per_var: dict[str, tuple[float, float]] = {}
    f_line = 0

    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ProblemFileError(f"expected 'directive: value', got {line!r}", lineno, source)
        key = key.strip()
        rest = rest.strip()
        if key == "vars":
            if names is not None:
                raise ProblemFileError("vars given twice", lineno, source)
            names = tuple(n.strip() for n in rest.split(","))
            for n in names:
                if not _IDENT.match(n) or n in FUNCTIONS:
                    raise ProblemFileError(f"invalid variable name {n!r}", lineno, source)
            if len(set(names)) != len(names):
                dup = sorted({n for n in names if names.count(n) > 1})
                raise ProblemFileError(f"duplicate variable name {dup[0]!r}", lineno, source)
        elif key == "f":
            if f_text is not None:
                raise ProblemFileError("objective given twice", lineno, source)
            f_text, f_line = rest, lineno
        elif key == "g":
            lhs, eq, rhs = rest.rpartition("=")
            if not eq:
                raise ProblemFileError("constraint needs the form 'expr = C'", lineno, source)
            cons.append((lhs, rhs, lineno))
        elif key == "box" or key.startswith("box "):
            parts = rest.split()
            if len(parts) != 2:
                raise ProblemFileError("box needs two numbers 'lo hi'", lineno, source)
            lo, hi = (_constant(t, lineno, source) for t in parts)
            if not lo < hi:
                raise ProblemFileError(f"empty box [{lo}, {hi}]", lineno, source)
            target = key[3:].strip()
            if target:
                per_var[target] = (lo, hi)
            else:
                uniform = (lo, hi)
        else:
            raise ProblemFileError(f"unknown directive {key!r}", lineno, source)

    if names is None:
        raise ProblemFileError("missing 'vars:' line", None, source)
    if f_text is None:
        raise ProblemFileError("missing 'f:' line", None, source)

    def expr(text_: str, lineno: int):
        try:
            return parse(text_, names)
        except ParseError as exc:
            raise ProblemFileError(f"{exc} (byte {exc.offset})", lineno, source) from None

    f = expr(f_text, f_line)
    constraints = tuple((expr(lhs, ln), _constant(rhs, ln, source)) for lhs, rhs, ln in cons)
    for name in per_var:
        if name not in names:
            raise ProblemFileError(f"box for unknown variable {name!r}", None, source)
    box = None
    if uniform is not None or per_var:
        base = uniform or DEFAULT_INTERVAL
        box = tuple(per_var.get(n, base) for n in names)
    try:
        return Problem(names, f, constraints, box, meta={"source": source})
    except ProblemError as exc:
        raise ProblemFileError(str(exc), None, source) from None


def load_problem(path) -> Problem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ProblemFileError(f"cannot read problem file: {exc}", None, str(path)) from None
    return parse_problem(text, str(path))


def print_problem(p: Problem) -> str:
    lines = [f"vars: {', '.join(p.names)}", f"f: {p.text(p.f)}"]
    lines += [f"g: {p.text(g)} = {c!r}" for g, c in p.constraints]
    if p.box is not None:
        lines += [f"box {n}: {lo!r} {hi!r}" for n, (lo, hi) in zip(p.names, p.box)]
    return "\n".join(lines) + "\n"
