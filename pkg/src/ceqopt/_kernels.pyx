# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape kernels; mirrors ``_kernels_py`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, tan, exp, log, sqrt, pow, floor, fmod, fabs, INFINITY, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_NEG = 2
DEF OP_ADD = 3
DEF OP_SUB = 4
DEF OP_MUL = 5
DEF OP_DIV = 6
DEF OP_POW = 7
DEF OP_SIN = 8
DEF OP_COS = 9
DEF OP_TAN = 10
DEF OP_EXP = 11
DEF OP_LOG = 12
DEF OP_SQRT = 13

DEF C_OK = 0
DEF C_SINGULAR = 1
DEF C_MAX_ITER = 2
DEF C_DIVERGED = 3
DEF C_DOMAIN = 4
DEF C_STALLED = 5

OK, SINGULAR, MAX_ITER, DIVERGED, DOMAIN, STALLED = range(6)

BACKEND = "cython"

cdef double DBL_MAX = 1.7976931348623157e308


cdef inline int _run(const int[:] ops, const int[:] a, const int[:] b,
                     const double[:] vals, const double* x, double* regs) noexcept nogil:
    cdef Py_ssize_t i, m = ops.shape[0]
    cdef int op
    cdef double u, v
    for i in range(m):
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
            v = regs[b[i]]
            if v == 0.0:
                return <int>i
            regs[i] = regs[a[i]] / v
        elif op == OP_NEG:
            regs[i] = -regs[a[i]]
        elif op == OP_POW:
            u = regs[a[i]]
            v = regs[b[i]]
            if v == floor(v):
                if u == 0.0 and v < 0.0:
                    return <int>i
                regs[i] = pow(u, v)
            else:
                if u <= 0.0:
                    return <int>i
                regs[i] = exp(v * log(u))
        else:
            u = regs[a[i]]
            if op == OP_SIN:
                regs[i] = sin(u)
            elif op == OP_COS:
                regs[i] = cos(u)
            elif op == OP_TAN:
                regs[i] = tan(u)
            elif op == OP_EXP:
                regs[i] = exp(u)
            elif op == OP_LOG:
                if u <= 0.0:
                    return <int>i
                regs[i] = log(u)
            else:
                if u < 0.0:
                    return <int>i
                regs[i] = sqrt(u)
    return -1


cdef inline double _resid(const double* regs, const int[:] outputs, int n) noexcept nogil:
    cdef double r = 0.0, v
    cdef int i
    for i in range(n):
        v = fabs(regs[outputs[i]])
        if not v <= DBL_MAX:
            return INFINITY
        if v > r:
            r = v
    return r


cdef int _solve(double* M, int n, double* d) noexcept nogil:
    """Row-major augmented n x (n+1) matrix; returns 0 on singular."""
    cdef int r, c, j, p, w = n + 1
    cdef double scale = 0.0, f, piv, s, t
    for r in range(n):
        for j in range(n):
            if fabs(M[r * w + j]) > scale:
                scale = fabs(M[r * w + j])
    if scale == 0.0 or scale != scale:
        return 0
    for c in range(n):
        p = c
        for r in range(c + 1, n):
            if fabs(M[r * w + c]) > fabs(M[p * w + c]):
                p = r
        if fabs(M[p * w + c]) <= 1e-13 * scale:
            return 0
        if p != c:
            for j in range(w):
                t = M[c * w + j]
                M[c * w + j] = M[p * w + j]
                M[p * w + j] = t
        piv = M[c * w + c]
        for r in range(c + 1, n):
            f = M[r * w + c] / piv
            if f != 0.0:
                for j in range(c, w):
                    M[r * w + j] -= f * M[c * w + j]
    for r in range(n - 1, -1, -1):
        s = M[r * w + n]
        for j in range(r + 1, n):
            s -= M[r * w + j] * d[j]
        d[r] = s / M[r * w + r]
    return 1


cdef inline int _load(const double* regs, const int[:] outputs, int n, double* M) noexcept nogil:
    cdef int r, j, w = n + 1
    for r in range(n):
        for j in range(n):
            M[r * w + j] = regs[outputs[n + r * n + j]]
        M[r * w + n] = -regs[outputs[r]]
    return 0


cdef int _newton(const int[:] ops, const int[:] a, const int[:] b, const double[:] vals,
                 const int[:] outputs, int n, double* x, const double* lo, const double* hi,
                 int max_iter, double res_tol, double step_tol, double min_step,
                 double* regs, double* M, double* d, double* xt, double* bx,
                 double* res_out, int* it_out) noexcept nogil:
    cdef int i, it = 0, k, have_best
    cdef double r, rt, t, best_r = 0.0, best_t = 0.0, step, xmax
    if _run(ops, a, b, vals, x, regs) >= 0:
        res_out[0] = INFINITY
        it_out[0] = 0
        return C_DOMAIN
    r = _resid(regs, outputs, n)
    if r == INFINITY:
        res_out[0] = r
        it_out[0] = 0
        return C_DOMAIN
    while True:
        if r <= res_tol:
            for k in range(2):
                _load(regs, outputs, n, M)
                if not _solve(M, n, d):
                    break
                for i in range(n):
                    xt[i] = x[i] + d[i]
                if _run(ops, a, b, vals, xt, regs) >= 0:
                    break
                rt = _resid(regs, outputs, n)
                if not rt < r:
                    break
                for i in range(n):
                    x[i] = xt[i]
                r = rt
            res_out[0] = r
            it_out[0] = it
            return C_OK
        if it >= max_iter:
            res_out[0] = r
            it_out[0] = it
            return C_MAX_ITER
        _load(regs, outputs, n, M)
        if not _solve(M, n, d):
            res_out[0] = r
            it_out[0] = it
            return C_SINGULAR
        t = 1.0
        have_best = 0
        while t >= min_step:
            for i in range(n):
                xt[i] = x[i] + t * d[i]
            if _run(ops, a, b, vals, xt, regs) < 0:
                rt = _resid(regs, outputs, n)
                if rt < INFINITY:
                    have_best = 1
                    best_r = rt
                    best_t = t
                    for i in range(n):
                        bx[i] = xt[i]
                    if rt < r:
                        break
            t *= 0.5
        if not have_best:
            res_out[0] = r
            it_out[0] = it
            return C_DOMAIN
        if _run(ops, a, b, vals, bx, regs) >= 0:
            res_out[0] = r
            it_out[0] = it
            return C_DOMAIN
        it += 1
        step = 0.0
        for i in range(n):
            if fabs(best_t * d[i]) > step:
                step = fabs(best_t * d[i])
            x[i] = bx[i]
        r = best_r
        for i in range(n):
            if x[i] < 0.5 * (lo[i] + hi[i]) - 5.0 * (hi[i] - lo[i]) or \
               x[i] > 0.5 * (lo[i] + hi[i]) + 5.0 * (hi[i] - lo[i]):
                res_out[0] = r
                it_out[0] = it
                return C_DIVERGED
        if r > res_tol:
            xmax = 0.0
            for i in range(n):
                if fabs(x[i]) > xmax:
                    xmax = fabs(x[i])
            if step <= step_tol * (1.0 + xmax):
                res_out[0] = r
                it_out[0] = it
                return C_STALLED


def run(ops, a, b, vals, x, regs):
    """Python-visible single evaluation (used for tests and ``evaluate``)."""
    cdef const int[:] o = ops
    cdef const int[:] aa = a
    cdef const int[:] bb = b
    cdef const double[:] vv = vals
    cdef double[::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] rr = np.empty(max(o.shape[0], 1), dtype=np.float64)
    cdef int st
    st = _run(o, aa, bb, vv, &xx[0] if xx.shape[0] else NULL, &rr[0])
    for i in range(o.shape[0]):
        regs[i] = rr[i]
    return st


def eval_batch(ops, a, b, vals, outputs, X):
    cdef const int[:] o = ops
    cdef const int[:] aa = a
    cdef const int[:] bb = b
    cdef const double[:] vv = vals
    cdef const int[:] out = outputs
    cdef double[:, ::1] XX = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t m = XX.shape[0], nout = out.shape[0], i, j
    values_arr = np.full((m, nout), np.nan)
    status_arr = np.empty(m, dtype=np.int64)
    cdef double[:, ::1] values = values_arr
    cdef long long[::1] status = status_arr
    cdef double* regs = <double*>malloc(max(o.shape[0], 1) * sizeof(double))
    cdef double dummy = 0.0
    cdef int st
    try:
        with nogil:
            for i in range(m):
                st = _run(o, aa, bb, vv, &XX[i, 0] if XX.shape[1] else &dummy, regs)
                status[i] = st
                if st < 0:
                    for j in range(nout):
                        values[i, j] = regs[out[j]]
    finally:
        free(regs)
    return values_arr, status_arr


def multistart(ops, a, b, vals, outputs, int n, starts, lo, hi,
               int max_iter, double res_tol, double step_tol, double min_step):
    cdef const int[:] o = ops
    cdef const int[:] aa = a
    cdef const int[:] bb = b
    cdef const double[:] vv = vals
    cdef const int[:] out = outputs
    X_arr = np.array(starts, dtype=np.float64, order="C", ndmin=2, copy=True)
    cdef double[:, ::1] X = X_arr
    cdef double[::1] L = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] H = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0], s
    codes_arr = np.empty(m, dtype=np.int64)
    res_arr = np.empty(m, dtype=np.float64)
    iters_arr = np.empty(m, dtype=np.int64)
    cdef long long[::1] codes = codes_arr
    cdef double[::1] res = res_arr
    cdef long long[::1] iters = iters_arr
    cdef double* regs = <double*>malloc(max(o.shape[0], 1) * sizeof(double))
    cdef double* M = <double*>malloc(n * (n + 1) * sizeof(double))
    cdef double* d = <double*>malloc(n * sizeof(double))
    cdef double* xt = <double*>malloc(n * sizeof(double))
    cdef double* bx = <double*>malloc(n * sizeof(double))
    cdef double r
    cdef int it, c
    try:
        with nogil:
            for s in range(m):
                c = _newton(o, aa, bb, vv, out, n, &X[s, 0], &L[0], &H[0],
                            max_iter, res_tol, step_tol, min_step,
                            regs, M, d, xt, bx, &r, &it)
                codes[s] = c
                res[s] = r
                iters[s] = it
    finally:
        free(regs)
        free(M)
        free(d)
        free(xt)
        free(bx)
    return codes_arr, X_arr, res_arr, iters_arr


def newton(ops, a, b, vals, outputs, int n, x0, lo, hi,
           int max_iter, double res_tol, double step_tol, double min_step):
    codes, X, res, iters = multistart(ops, a, b, vals, outputs, n, [list(x0)], lo, hi,
                                      max_iter, res_tol, step_tol, min_step)
    return int(codes[0]), list(X[0]), float(res[0]), int(iters[0])
