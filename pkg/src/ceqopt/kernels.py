"""Expression tapes and the backend that executes them.

A tape is the flattened DAG of one or more expressions: one instruction per
unique node, children first.  The compiled ``_kernels`` extension is used
when it is importable; ``CEQOPT_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels_py
from .expr import CONST, FUNC, VAR, DomainError, Expr, postorder

_py = _kernels_py

if os.environ.get("CEQOPT_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

OK, SINGULAR, MAX_ITER, DIVERGED, DOMAIN, STALLED = range(6)
FAILURE_REASONS = {
    SINGULAR: "singular-jacobian",
    MAX_ITER: "max-iterations",
    DIVERGED: "diverged-out-of-box",
    DOMAIN: "domain-error",
    STALLED: "stalled",
}

_OPCODE = {
    "const": 0, "var": 1, "neg": 2, "add": 3, "sub": 4, "mul": 5, "div": 6, "pow": 7,
    "sin": 8, "cos": 9, "tan": 10, "exp": 11, "log": 12, "sqrt": 13,
}


@dataclass(frozen=True)
class Tape:
    ops: np.ndarray
    a: np.ndarray
    b: np.ndarray
    vals: np.ndarray
    outputs: np.ndarray
    n_vars: int
    kinds: tuple
    _lists: tuple = field(repr=False, compare=False, default=())

    @property
    def size(self) -> int:
        return len(self.ops)

    def as_lists(self):
        return self._lists


def compile_exprs(exprs: Sequence[Expr]) -> Tape:
    nodes = postorder(list(exprs))
    slot = {id(n): i for i, n in enumerate(nodes)}
    ops, a, b, vals, kinds = [], [], [], [], []
    n_vars = 0
    for n in nodes:
        kind = n.value if n.kind == FUNC else n.kind
        kinds.append(kind)
        ops.append(_OPCODE[kind])
        if n.kind == CONST:
            a.append(0)
            b.append(0)
            vals.append(n.value)
        elif n.kind == VAR:
            a.append(n.value)
            b.append(0)
            vals.append(0.0)
            n_vars = max(n_vars, n.value + 1)
        else:
            a.append(slot[id(n.args[0])])
            b.append(slot[id(n.args[1])] if len(n.args) > 1 else 0)
            vals.append(0.0)
    outputs = [slot[id(e)] for e in exprs]
    lists = (ops, a, b, vals, outputs)
    return Tape(
        ops=np.asarray(ops, dtype=np.int32),
        a=np.asarray(a, dtype=np.int32),
        b=np.asarray(b, dtype=np.int32),
        vals=np.asarray(vals, dtype=np.float64),
        outputs=np.asarray(outputs, dtype=np.int32),
        n_vars=n_vars,
        kinds=tuple(kinds),
        _lists=lists,
    )


def _impl(backend: str | None):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    return _py


def _args(tape: Tape, impl):
    if impl is _py:
        return tape.as_lists()
    return tape.ops, tape.a, tape.b, tape.vals, tape.outputs


def eval_tape(tape: Tape, point: Sequence[float], backend: str | None = None) -> list[float]:
    """Evaluate all tape outputs at one point, raising :class:`DomainError`."""
    x = [float(v) for v in point]
    regs = [0.0] * tape.size
    impl = _impl(backend)
    ops, a, b, vals, outputs = _args(tape, impl)
    st = impl.run(ops, a, b, vals, x, regs)
    if st >= 0:
        raise DomainError(tape.kinds[st], x)
    return [regs[o] for o in tape.outputs.tolist()]


def eval_batch(tape: Tape, X, backend: str | None = None):
    """Evaluate at each row of ``X``; returns (values[m, n_out], status[m]).

    ``status`` is -1 where evaluation succeeded, otherwise the index of the
    failing instruction (values are NaN there).
    """
    impl = _impl(backend)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] < tape.n_vars:
        raise ValueError("points have too few coordinates")
    ops, a, b, vals, outputs = _args(tape, impl)
    if impl is _py:
        values, status = impl.eval_batch(ops, a, b, vals, outputs, X.tolist())
        return np.asarray(values, dtype=np.float64).reshape(len(X), len(outputs)), np.asarray(status)
    return impl.eval_batch(ops, a, b, vals, outputs, X)


def run_multistart(tape: Tape, n: int, starts, lo, hi, max_iter: int, res_tol: float,
                   step_tol: float, min_step: float, backend: str | None = None):
    """Damped Newton from each start.

    The tape's first ``n`` outputs are the residuals and the next ``n*n`` the
    row-major Jacobian.  Returns (codes, X, residuals, iterations) arrays.
    """
    impl = _impl(backend)
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, n)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    ops, a, b, vals, outputs = _args(tape, impl)
    if impl is _py:
        codes, X, res, iters = impl.multistart(
            ops, a, b, vals, outputs, n, starts.tolist(), lo.tolist(), hi.tolist(),
            max_iter, res_tol, step_tol, min_step)
        return (np.asarray(codes, dtype=np.int64), np.asarray(X, dtype=np.float64).reshape(-1, n),
                np.asarray(res, dtype=np.float64), np.asarray(iters, dtype=np.int64))
    return impl.multistart(ops, a, b, vals, outputs, n, starts, lo, hi,
                           max_iter, res_tol, step_tol, min_step)


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])

