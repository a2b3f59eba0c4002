"""Local polynomial recovery of g from partial residuals.

The heavy lifting (one small weighted least squares solve per evaluation
point) happens in ``_kernels.pyx``, with a numpy fallback in
``_pykernels.py``; see :mod:`plmpart._backend`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import BandwidthTooSmall, PlmError

EPANECHNIKOV = "epanechnikov"
GAUSSIAN = "gaussian"
_FAMILY_CODE = {EPANECHNIKOV: 0, GAUSSIAN: 1}

DEFAULT_DEGREE = 2
DEFAULT_GRID_SIZE = 100
N_CANDIDATES = 20


@dataclass(frozen=True)
class KernelSpec:
    family: str
    int_K2: float
    int_Kprime2: float

    @property
    def code(self) -> int:
        return _FAMILY_CODE[self.family]


def kernel_constants(family: str) -> tuple[float, float]:
    """Closed-form ``(int K^2, int K'^2)`` for a kernel family."""
    if family == EPANECHNIKOV:
        return 0.6, 1.5
    if family == GAUSSIAN:
        rp = math.sqrt(math.pi)
        return 1.0 / (2.0 * rp), 1.0 / (4.0 * rp)
    raise PlmError(f"unknown kernel family {family!r}; choose from {tuple(_FAMILY_CODE)}")


def kernel_spec(family: str | KernelSpec = EPANECHNIKOV) -> KernelSpec:
    if isinstance(family, KernelSpec):
        return family
    return KernelSpec(family, *kernel_constants(family))


def kernel_function(family: str):
    """Vectorized kernel ``K(t)``; used by tests and documentation."""
    if family == EPANECHNIKOV:
        return lambda t: np.where(np.abs(t) < 1.0, 0.75 * (1.0 - np.square(t)), 0.0)
    if family == GAUSSIAN:
        return lambda t: np.exp(-0.5 * np.square(t)) / math.sqrt(2.0 * math.pi)
    raise PlmError(f"unknown kernel family {family!r}")


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    """Local polynomial estimate of one curve on an evaluation grid."""

    grid: np.ndarray
    ghat: np.ndarray
    var_ghat: np.ndarray
    bandwidth: float
    degree: int
    level: object = None
    sigma2: float = float("nan")


def smooth(x, y, at, h, degree=DEFAULT_DEGREE, kernel=EPANECHNIKOV, presorted=False):
    """Raw kernel output ``(fit, l2, lev, ok)`` at points ``at``.

    ``l2`` is the squared norm of the equivalent kernel weights and ``lev``
    the weight an observation located at the evaluation point gives itself.
    """
    if not h > 0:
        raise PlmError(f"bandwidth must be positive, got {h!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not presorted:
        o = np.argsort(x, kind="stable")
        x, y = x[o], y[o]
    at = np.ascontiguousarray(at, dtype=np.float64)
    return _backend.locpoly(np.ascontiguousarray(x), np.ascontiguousarray(y), at,
                            float(h), int(degree), kernel_spec(kernel).code)


def _fit_at_data(x, y, h, degree, kernel):
    """Sorted-data fits; returns ``(x_sorted, y_sorted, fit, l2, lev)``."""
    o = np.argsort(x, kind="stable")
    xs, ys = x[o], y[o]
    fit, l2, lev, ok = smooth(xs, ys, xs, h, degree, kernel, presorted=True)
    if not ok.all():
        raise BandwidthTooSmall(xs[np.argmin(ok)], h)
    return xs, ys, fit, l2, lev


def residual_variance(y, fit, l2, lev) -> float:
    """``RSS / (n - 2 tr L + tr L'L)`` from fits at the data points."""
    r = y - fit
    dof = y.size - 2.0 * lev.sum() + l2.sum()
    if dof <= 0:
        dof = y.size - lev.sum()
    if dof <= 0:
        raise PlmError("local fit leaves no residual degrees of freedom")
    return float(r @ r) / dof


def local_poly_fit(x, y, degree, h, kernel, grid, level=None, presorted=False) -> CurveEstimate:
    """Local polynomial estimate of ``E[y | x]`` on ``grid`` with pointwise variance.

    The variance at ``u`` is the residual variance of the fit at the data
    points times the squared norm of the equivalent kernel weights at ``u``.

    Raises
    ------
    BandwidthTooSmall
        If the local design is singular at a grid point. Data points with
        a singular local design are left out of the residual variance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if presorted:
        xs, ys = x, y
    else:
        o = np.argsort(x, kind="stable")
        xs, ys = x[o], y[o]
    grid = np.asarray(grid, dtype=np.float64)
    g, gl2, _, gok = smooth(xs, ys, grid, h, degree, kernel, presorted=True)
    if not gok.all():
        raise BandwidthTooSmall(grid[np.argmin(gok)], h)
    fit, l2, lev, ok = smooth(xs, ys, xs, h, degree, kernel, presorted=True)
    # isolated data points off the grid carry no local fit; leave them out
    s2 = residual_variance(ys[ok], fit[ok], l2[ok], lev[ok])
    return CurveEstimate(grid, g, s2 * gl2, float(h), int(degree), level, s2)


def gcv_score(x, y, degree, h, kernel=EPANECHNIKOV) -> float:
    """``n RSS(h) / (n - tr L(h))^2``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, ys, fit, _, lev = _fit_at_data(x, y, h, degree, kernel)
    r = ys - fit
    n = y.size
    return n * float(r @ r) / (n - lev.sum()) ** 2


def candidate_bandwidths(x, count: int = N_CANDIDATES) -> np.ndarray:
    """Log-spaced bandwidths from twice the largest gap in ``x`` to its range."""
    xs = np.sort(np.asarray(x, dtype=np.float64))
    span = xs[-1] - xs[0]
    if not span > 0:
        raise PlmError("x has zero range; cannot smooth")
    lo = 2.0 * np.max(np.diff(xs))
    if lo >= span:
        lo = span / 2.0
    return np.geomspace(lo, span, count)


def gcv_bandwidth(x, y, degree=DEFAULT_DEGREE, kernel=EPANECHNIKOV, candidates=None) -> float:
    """Bandwidth minimizing GCV over ``candidates``; ties go to the larger h.

    Candidates whose local fits are singular are skipped. Scores within
    ``1e-12 * var(y)`` of the running minimum are treated as tied.
    """
    cands = candidate_bandwidths(x) if candidates is None else np.sort(np.asarray(candidates, float))
    if cands.size == 0:
        raise PlmError("no candidate bandwidths")
    return pick_bandwidth(cands, gcv_scores(x, y, degree, cands, kernel), y)


def gcv_scores(x, y, degree, candidates, kernel=EPANECHNIKOV) -> np.ndarray:
    """GCV score per candidate; ``inf`` where the local fits are singular."""
    out = np.full(len(candidates), np.inf)
    for k, h in enumerate(candidates):
        try:
            out[k] = gcv_score(x, y, degree, h, kernel)
        except BandwidthTooSmall:
            pass
    return out


def pick_bandwidth(candidates, scores, y) -> float:
    """Smallest-score candidate in ascending ``candidates``; ties go to the larger h."""
    # scores closer than round-off of the response scale count as ties
    tie = 1e-12 * float(np.var(np.asarray(y, dtype=np.float64)))
    best, best_h = np.inf, None
    for h, score in zip(candidates, scores):
        if np.isfinite(score) and score <= best + tie:
            best, best_h = min(score, best), float(h)
    if best_h is None:
        raise PlmError("every candidate bandwidth gives a singular local fit")
    return best_h


def default_grid(x, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Equispaced points between the 2nd and 98th percentiles of ``x``."""
    lo, hi = np.percentile(np.asarray(x, dtype=np.float64), [2.0, 98.0])
    return np.linspace(lo, hi, int(size))


def backend() -> str:
    """Name of the active kernel implementation, ``"compiled"`` or ``"python"``."""
    return _backend.BACKEND
