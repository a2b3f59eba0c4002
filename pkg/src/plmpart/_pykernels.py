"""Pure numpy fallback for the compiled local polynomial kernel.

Same moments, same Cholesky pivot rule as ``_kernels.pyx``; vectorized over
blocks of evaluation points instead of looping.
"""

from __future__ import annotations

import numpy as np

MAXP = 8
PIVOT_TOL = 1e-11
_BLOCK = 256


def _kern(t: np.ndarray, family: int) -> np.ndarray:
    if family == 0:
        return np.where(np.abs(t) < 1.0, 0.75 * (1.0 - t * t), 0.0)
    return 0.3989422804014327 * np.exp(-0.5 * t * t)


def _solve_block(xs, ys, u, h, degree, family):
    p = degree + 1
    nm = 2 * degree + 1
    t = (xs[None, :] - u[:, None]) / h
    w = _kern(t, family)
    pw = np.ones_like(t)
    s = np.empty((u.size, nm))
    q = np.empty((u.size, nm))
    ty = np.empty((u.size, p))
    for k in range(nm):
        s[:, k] = (w * pw).sum(axis=1)
        q[:, k] = (w * w * pw).sum(axis=1)
        if k < p:
            ty[:, k] = (w * pw * ys[None, :]).sum(axis=1)
        pw = pw * t

    ok = np.ones(u.size, dtype=bool)
    L = np.zeros((u.size, p, p))
    for j in range(p):
        acc = s[:, 2 * j] - (L[:, j, :j] ** 2).sum(axis=1)
        ok &= (acc > PIVOT_TOL * s[:, 2 * j]) & (s[:, 2 * j] > 0.0)
        piv = np.sqrt(np.where(ok, acc, 1.0))
        L[:, j, j] = piv
        for r in range(j + 1, p):
            acc = s[:, r + j] - (L[:, r, :j] * L[:, j, :j]).sum(axis=1)
            L[:, r, j] = acc / piv

    z = np.zeros((u.size, p))
    a = np.zeros((u.size, p))
    for j in range(p):
        acc = (1.0 if j == 0 else 0.0) - (L[:, j, :j] * z[:, :j]).sum(axis=1)
        z[:, j] = acc / L[:, j, j]
    for j in range(p - 1, -1, -1):
        acc = z[:, j] - (L[:, j + 1:, j] * a[:, j + 1:]).sum(axis=1)
        a[:, j] = acc / L[:, j, j]

    fit = (a * ty).sum(axis=1)
    hank = np.add.outer(np.arange(p), np.arange(p))
    l2 = np.einsum("mj,mk,mjk->m", a, a, q[:, hank])
    lev = _kern(np.zeros(1), family)[0] * a[:, 0]
    fit[~ok] = np.nan
    l2[~ok] = np.nan
    lev[~ok] = np.nan
    return fit, l2, lev, ok


def locpoly(xs, ys, u, h, degree, family):
    """Local polynomial fits of sorted ``(xs, ys)`` at points ``u``.

    Returns ``(fit, l2, lev, ok)`` exactly as the compiled kernel does.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if degree < 0 or degree + 1 > MAXP:
        raise ValueError(f"degree must be in [0, {MAXP - 1}]")
    if ys.shape[0] != xs.shape[0]:
        raise ValueError("xs and ys must have equal length")
    out = [np.full(u.size, np.nan) for _ in range(3)] + [np.zeros(u.size, dtype=bool)]
    if xs.size == 0:
        return tuple(out)
    for start in range(0, u.size, _BLOCK):
        sl = slice(start, start + _BLOCK)
        for dst, src in zip(out, _solve_block(xs, ys, u[sl], h, degree, family)):
            dst[sl] = src
    return tuple(out)
