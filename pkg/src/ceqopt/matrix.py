"""Symbolic Jacobians, constraint matrices and infinitesimal coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import ONE, ZERO, Expr, add, differentiate, mul, neg, simplify, sub
from .kernels import compile_exprs, eval_batch, eval_tape

N_MAX = 8


class DimensionError(ValueError):
    pass


class MatrixTooLargeError(ValueError):
    """Symbolic cofactor expansion refused above ``N_MAX``."""


@dataclass(frozen=True)
class ExprMatrix:
    rows: int
    cols: int
    entries: tuple

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise DimensionError(f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Expr]]) -> "ExprMatrix":
        rows = [list(r) for r in rows]
        ncols = len(rows[0]) if rows else 0
        if any(len(r) != ncols for r in rows):
            raise DimensionError("ragged rows")
        return cls(len(rows), ncols, tuple(e for r in rows for e in r))

    def __getitem__(self, rc):
        r, c = rc
        return self.entries[r * self.cols + c]

    def row(self, r: int) -> list[Expr]:
        return list(self.entries[r * self.cols:(r + 1) * self.cols])

    def column(self, c: int) -> list[Expr]:
        return [self.entries[r * self.cols + c] for r in range(self.rows)]

    def evaluate(self, point) -> np.ndarray:
        """Entrywise numeric value at ``point``."""
        if not self.entries:
            return np.zeros((self.rows, self.cols))
        vals = eval_tape(compile_exprs(list(self.entries)), point)
        return np.asarray(vals, dtype=float).reshape(self.rows, self.cols)

    def evaluate_many(self, points) -> tuple[np.ndarray, np.ndarray]:
        values, status = eval_batch(compile_exprs(list(self.entries)), points)
        return values.reshape(len(values), self.rows, self.cols), status


def problem_jacobian(f: Expr, g: Sequence[Expr], n: int | None = None) -> ExprMatrix:
    """Rows are the gradients of ``f`` and of each constraint."""
    if n is None:
        n = len(g) + 1
    if len(g) != n - 1:
        raise DimensionError(f"expected {n - 1} constraints for {n} variables, found {len(g)}")
    return ExprMatrix.from_rows([[differentiate(h, j) for j in range(n)] for h in [f, *g]])


def constraint_jacobian(g: Sequence[Expr], n: int | None = None) -> ExprMatrix:
    if n is None:
        n = len(g) + 1
    if len(g) != n - 1:
        raise DimensionError(f"expected {n - 1} constraints for {n} variables, found {len(g)}")
    return ExprMatrix(len(g), n, tuple(differentiate(h, j) for h in g for j in range(n)))


def constraint_matrix(jg: ExprMatrix, k: int) -> ExprMatrix:
    """Delete column ``k`` of the constraint Jacobian."""
    if jg.cols != jg.rows + 1:
        raise DimensionError(f"constraint Jacobian must be (N-1)xN, got {jg.rows}x{jg.cols}")
    if not 0 <= k < jg.cols:
        raise IndexError(k)
    keep = [j for j in range(jg.cols) if j != k]
    return ExprMatrix(jg.rows, jg.cols - 1, tuple(jg[r, j] for r in range(jg.rows) for j in keep))


def _minor_det(m: ExprMatrix, rows: tuple, cols: tuple, memo: dict) -> Expr:
    key = (rows, cols)
    if key in memo:
        return memo[key]
    if not rows:
        out = ONE
    elif len(rows) == 1:
        out = m[rows[0], cols[0]]
    else:
        # expand along the row with the most literal zeros
        best = max(rows, key=lambda r: sum(1 for c in cols if m[r, c] is ZERO))
        rest = tuple(r for r in rows if r != best)
        out = ZERO
        for pos, c in enumerate(cols):
            entry = m[best, c]
            if entry is ZERO:
                continue
            sub_cols = cols[:pos] + cols[pos + 1:]
            term = mul(entry, _minor_det(m, rest, sub_cols, memo))
            sign = (rows.index(best) + pos) % 2
            out = sub(out, term) if sign else add(out, term)
    memo[key] = out
    return out


def determinant(m: ExprMatrix) -> Expr:
    """Symbolic determinant by cofactor expansion."""
    if m.rows != m.cols:
        raise DimensionError(f"determinant of a non-square {m.rows}x{m.cols} matrix")
    if m.rows > N_MAX:
        raise MatrixTooLargeError(f"symbolic determinant limited to {N_MAX}x{N_MAX}, got {m.rows}")
    return simplify(_minor_det(m, tuple(range(m.rows)), tuple(range(m.cols)), {}))


def adjugate(m: ExprMatrix) -> ExprMatrix:
    """Transpose of the cofactor matrix."""
    n = m.rows
    if m.rows != m.cols:
        raise DimensionError("adjugate of a non-square matrix")
    if n > N_MAX:
        raise MatrixTooLargeError(f"symbolic adjugate limited to {N_MAX}x{N_MAX}, got {n}")
    memo: dict = {}
    entries = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            rows = tuple(r for r in range(n) if r != j)
            cols = tuple(c for c in range(n) if c != i)
            minor = _minor_det(m, rows, cols, memo)
            entries[i][j] = simplify(neg(minor) if (i + j) % 2 else minor)
    return ExprMatrix.from_rows(entries)


@dataclass(frozen=True)
class InfinitesimalCoeffs:
    """dx_i = (numerators[i] / denominator) dx_k along the constraint curve.

    ``numerators[axis]`` is the denominator itself, so the self-coefficient
    is exactly one.
    """

    axis: int
    numerators: tuple
    denominator: Expr

    def values(self, point) -> np.ndarray:
        vals = eval_tape(compile_exprs([*self.numerators, self.denominator]), point)
        den = vals[-1]
        if den == 0.0:
            raise ZeroDivisionError(f"constraint matrix for axis {self.axis} is singular")
        return np.asarray(vals[:-1]) / den

    def ratio(self, i: int) -> tuple[Expr, Expr]:
        return self.numerators[i], self.denominator


def infinitesimal_coeffs(jg: ExprMatrix, k: int) -> InfinitesimalCoeffs:
    n = jg.cols
    s = constraint_matrix(jg, k)
    det = determinant(s)
    adj = adjugate(s)
    col = jg.column(k)
    others = [j for j in range(n) if j != k]
    nums = [ZERO] * n
    nums[k] = det
    for p, i in enumerate(others):
        acc = ZERO
        for l in range(s.rows):
            acc = add(acc, mul(adj[p, l], col[l]))
        nums[i] = simplify(neg(acc))
    return InfinitesimalCoeffs(axis=k, numerators=tuple(nums), denominator=det)
