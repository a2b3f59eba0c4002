# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled local polynomial kernel.

Each evaluation point is an independent small weighted least squares solve,
so results do not depend on evaluation order.
"""

import numpy as np

from libc.math cimport exp, sqrt

cdef enum:
    MAXP = 8
    MAXM = 15

cdef double PIVOT_TOL = 1e-11


cdef inline double _kern(double t, int family) noexcept nogil:
    if family == 0:
        if t <= -1.0 or t >= 1.0:
            return 0.0
        return 0.75 * (1.0 - t * t)
    return 0.3989422804014327 * exp(-0.5 * t * t)


cdef inline Py_ssize_t _bisect_left(const double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _bisect_right(const double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if v < a[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef int _solve_point(const double* xs, const double* ys, Py_ssize_t n, double u,
                      double h, int degree, int family,
                      double* fit, double* l2, double* lev) noexcept nogil:
    cdef double s[MAXM]
    cdef double q[MAXM]
    cdef double ty[MAXP]
    cdef double L[MAXP][MAXP]
    cdef double z[MAXP]
    cdef double a[MAXP]
    cdef int p = degree + 1
    cdef int nm = 2 * degree + 1
    cdef int j, k, r
    cdef Py_ssize_t i, lo, hi
    cdef double t, w, pw, acc, piv, yi

    for k in range(nm):
        s[k] = 0.0
        q[k] = 0.0
    for k in range(p):
        ty[k] = 0.0

    if family == 0:
        lo = _bisect_left(xs, n, u - h)
        hi = _bisect_right(xs, n, u + h)
    else:
        lo = 0
        hi = n

    for i in range(lo, hi):
        t = (xs[i] - u) / h
        w = _kern(t, family)
        if w == 0.0:
            continue
        yi = ys[i]
        pw = 1.0
        for k in range(nm):
            s[k] += w * pw
            q[k] += w * w * pw
            if k < p:
                ty[k] += w * pw * yi
            pw *= t

    # Cholesky of the Hankel moment matrix, pivots relative to the diagonal
    for j in range(p):
        acc = s[2 * j]
        for k in range(j):
            acc -= L[j][k] * L[j][k]
        if not (acc > PIVOT_TOL * s[2 * j]) or s[2 * j] <= 0.0:
            return 0
        piv = sqrt(acc)
        L[j][j] = piv
        for r in range(j + 1, p):
            acc = s[r + j]
            for k in range(j):
                acc -= L[r][k] * L[j][k]
            L[r][j] = acc / piv

    # a = S^{-1} e_1
    for j in range(p):
        acc = 1.0 if j == 0 else 0.0
        for k in range(j):
            acc -= L[j][k] * z[k]
        z[j] = acc / L[j][j]
    for j in range(p - 1, -1, -1):
        acc = z[j]
        for k in range(j + 1, p):
            acc -= L[k][j] * a[k]
        a[j] = acc / L[j][j]

    acc = 0.0
    for j in range(p):
        acc += a[j] * ty[j]
    fit[0] = acc
    acc = 0.0
    for j in range(p):
        for k in range(p):
            acc += a[j] * a[k] * q[j + k]
    l2[0] = acc
    lev[0] = _kern(0.0, family) * a[0]
    return 1


def locpoly(const double[::1] xs, const double[::1] ys, const double[::1] u,
            double h, int degree, int family):
    """Local polynomial fits of sorted ``(xs, ys)`` at points ``u``.

    Returns ``(fit, l2, lev, ok)``: intercepts, squared norms of the
    equivalent kernel weights, self-weights ``K(0) (S^{-1})_{00}`` and a
    boolean mask of nonsingular local designs.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t i
    if degree < 0 or degree + 1 > MAXP:
        raise ValueError(f"degree must be in [0, {MAXP - 1}]")
    if ys.shape[0] != n:
        raise ValueError("xs and ys must have equal length")
    fit = np.full(m, np.nan)
    l2 = np.full(m, np.nan)
    lev = np.full(m, np.nan)
    ok = np.zeros(m, dtype=np.uint8)
    cdef double[::1] fv = fit
    cdef double[::1] lv = l2
    cdef double[::1] ev = lev
    cdef unsigned char[::1] okv = ok
    if n == 0:
        return fit, l2, lev, ok.view(bool)
    with nogil:
        for i in range(m):
            okv[i] = _solve_point(&xs[0], &ys[0], n, u[i], h, degree, family,
                                  &fv[i], &lv[i], &ev[i])
    return fit, l2, lev, ok.view(bool)
