from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .expr import Expr, const, sub, to_text
from .parse import parse


class ProblemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """Optimise ``f`` over the curve ``g_k(x) = C_k``, k = 1..N-1."""

    names: tuple
    f: Expr
    constraints: tuple  # ((g, C), ...)
    box: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "constraints", tuple((g, float(c)) for g, c in self.constraints))
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ProblemError("duplicate variable name")
        if n < 2:
            raise ProblemError("at least two variables are required")
        if len(self.constraints) != n - 1:
            raise ProblemError(
                f"expected N-1 = {n - 1} constraints, found {len(self.constraints)}"
                + (" (under-determined: solutions would not be isolated points)"
                   if len(self.constraints) < n - 1 else ""))
        if self.box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            if len(box) != n or any(not lo < hi for lo, hi in box):
                raise ProblemError("box must give lo < hi for every variable")
            object.__setattr__(self, "box", box)

    @classmethod
    def from_strings(cls, names: Sequence[str], f: str, constraints: Sequence[tuple[str, float]],
                     box=None) -> "Problem":
        names = tuple(names)
        return cls(names, parse(f, names), tuple((parse(g, names), c) for g, c in constraints), box)

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def g(self) -> list[Expr]:
        return [g for g, _ in self.constraints]

    @cached_property
    def residuals(self) -> list[Expr]:
        """``g_k - C_k`` for each constraint."""
        return [sub(g, const(c)) for g, c in self.constraints]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ProblemError(f"unknown variable {name!r}") from None

    def text(self, e: Expr) -> str:
        return to_text(e, self.names)

    def search_box(self, default=(-3.0, 3.0)) -> tuple:
        return self.box if self.box is not None else (tuple(default),) * self.n
