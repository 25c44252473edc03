"""Pure-Python tape kernels.

Reference implementation of the compiled ``_kernels`` extension; the two
must stay behaviourally identical (same status codes, same iteration
counts on the same input).
"""

import math

OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_SIN, OP_COS, OP_TAN, OP_EXP, OP_LOG, OP_SQRT = range(8, 14)

OK, SINGULAR, MAX_ITER, DIVERGED, DOMAIN, STALLED = range(6)

BACKEND = "python"


def _pow(x, y):
    if y == math.floor(y):
        if x == 0.0 and y < 0.0:
            return None
        try:
            return math.pow(x, y)
        except OverflowError:
            if x < 0.0 and math.fmod(y, 2.0) != 0.0:
                return -math.inf
            return math.inf
    if x <= 0.0:
        return None
    try:
        return math.exp(y * math.log(x))
    except OverflowError:
        return math.inf


def run(ops, a, b, vals, x, regs):
    """Execute the tape into ``regs``; return -1 or the failing instruction."""
    for i in range(len(ops)):
        op = ops[i]
        if op == OP_CONST:
            regs[i] = vals[i]
        elif op == OP_VAR:
            regs[i] = x[a[i]]
        elif op == OP_ADD:
            regs[i] = regs[a[i]] + regs[b[i]]
        elif op == OP_SUB:
            regs[i] = regs[a[i]] - regs[b[i]]
        elif op == OP_MUL:
            regs[i] = regs[a[i]] * regs[b[i]]
        elif op == OP_DIV:
            d = regs[b[i]]
            if d == 0.0:
                return i
            regs[i] = regs[a[i]] / d
        elif op == OP_NEG:
            regs[i] = -regs[a[i]]
        elif op == OP_POW:
            v = _pow(regs[a[i]], regs[b[i]])
            if v is None:
                return i
            regs[i] = v
        else:
            u = regs[a[i]]
            if op <= OP_TAN and (u == math.inf or u == -math.inf):
                regs[i] = math.nan
            elif op == OP_SIN:
                regs[i] = math.sin(u)
            elif op == OP_COS:
                regs[i] = math.cos(u)
            elif op == OP_TAN:
                regs[i] = math.tan(u)
            elif op == OP_EXP:
                try:
                    regs[i] = math.exp(u)
                except OverflowError:
                    regs[i] = math.inf
            elif op == OP_LOG:
                if u <= 0.0:
                    return i
                regs[i] = math.log(u)
            else:
                if u < 0.0:
                    return i
                regs[i] = math.sqrt(u)
    return -1


def eval_batch(ops, a, b, vals, outputs, X):
    """Evaluate every row of ``X``; returns (values, status) as nested lists."""
    regs = [0.0] * len(ops)
    values = []
    status = []
    for row in X:
        st = run(ops, a, b, vals, row, regs)
        status.append(st)
        if st < 0:
            values.append([regs[o] for o in outputs])
        else:
            values.append([math.nan] * len(outputs))
    return values, status


def _solve(J, F, n):
    """Solve J d = -F by Gaussian elimination with partial pivoting."""
    M = [J[r * n:(r + 1) * n] + [-F[r]] for r in range(n)]
    scale = 0.0
    for row in M:
        for v in row[:n]:
            if abs(v) > scale:
                scale = abs(v)
    if scale == 0.0 or scale != scale:
        return None
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(M[r][c]))
        if abs(M[p][c]) <= 1e-13 * scale:
            return None
        if p != c:
            M[c], M[p] = M[p], M[c]
        piv = M[c][c]
        for r in range(c + 1, n):
            f = M[r][c] / piv
            if f != 0.0:
                Mr, Mc = M[r], M[c]
                for j in range(c, n + 1):
                    Mr[j] -= f * Mc[j]
    d = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = M[r][n]
        for j in range(r + 1, n):
            s -= M[r][j] * d[j]
        d[r] = s / M[r][r]
    return d


def _resid(regs, outputs, n):
    r = 0.0
    for i in range(n):
        v = abs(regs[outputs[i]])
        if not v <= 1.7976931348623157e308:
            return math.inf
        if v > r:
            r = v
    return r


def newton(ops, a, b, vals, outputs, n, x0, lo, hi,
           max_iter, res_tol, step_tol, min_step):
    """Damped Newton from ``x0``; returns (code, x, residual, iterations)."""
    regs = [0.0] * len(ops)
    x = list(x0)
    outer_lo = [0.5 * (l + h) - 5.0 * (h - l) for l, h in zip(lo, hi)]
    outer_hi = [0.5 * (l + h) + 5.0 * (h - l) for l, h in zip(lo, hi)]

    if run(ops, a, b, vals, x, regs) >= 0:
        return DOMAIN, x, math.inf, 0
    r = _resid(regs, outputs, n)
    if r == math.inf:
        return DOMAIN, x, r, 0
    it = 0
    while True:
        F = [regs[outputs[i]] for i in range(n)]
        J = [regs[outputs[n + i]] for i in range(n * n)]
        if r <= res_tol:
            for _ in range(2):
                d = _solve(J, F, n)
                if d is None:
                    break
                xt = [x[i] + d[i] for i in range(n)]
                if run(ops, a, b, vals, xt, regs) >= 0:
                    break
                rt = _resid(regs, outputs, n)
                if not rt < r:
                    break
                x, r = xt, rt
                F = [regs[outputs[i]] for i in range(n)]
                J = [regs[outputs[n + i]] for i in range(n * n)]
            return OK, x, r, it
        if it >= max_iter:
            return MAX_ITER, x, r, it
        d = _solve(J, F, n)
        if d is None:
            return SINGULAR, x, r, it
        t = 1.0
        best = None
        while t >= min_step:
            xt = [x[i] + t * d[i] for i in range(n)]
            if run(ops, a, b, vals, xt, regs) < 0:
                rt = _resid(regs, outputs, n)
                if rt < math.inf:
                    best = (xt, rt, t)
                    if rt < r:
                        break
            t *= 0.5
        if best is None:
            return DOMAIN, x, r, it
        xt, rt, t = best
        if run(ops, a, b, vals, xt, regs) >= 0:
            return DOMAIN, x, r, it
        it += 1
        step = max(abs(t * d[i]) for i in range(n))
        x, r = xt, rt
        for i in range(n):
            if x[i] < outer_lo[i] or x[i] > outer_hi[i]:
                return DIVERGED, x, r, it
        if r > res_tol and step <= step_tol * (1.0 + max(abs(v) for v in x)):
            return STALLED, x, r, it


def multistart(ops, a, b, vals, outputs, n, starts, lo, hi,
               max_iter, res_tol, step_tol, min_step):
    codes, X, res, iters = [], [], [], []
    for x0 in starts:
        c, x, r, k = newton(ops, a, b, vals, outputs, n, x0, lo, hi,
                            max_iter, res_tol, step_tol, min_step)
        codes.append(c)
        X.append(x)
        res.append(r)
        iters.append(k)
    return codes, X, res, iters
