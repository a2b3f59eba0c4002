"""Tests on the linear part and on the difference of two nonparametric curves.

``t1_test`` compares restricted and unrestricted profile least squares fits
of ``A beta = 0``; its scaled statistic is asymptotically chi-square and is
also calibrated by a residual bootstrap under the null fit.

``t2_test`` compares the curves ``g(. | Zd = 1)`` and ``g(. | Zd = 0)``
through a standardized sup-distance, calibrated by resampling the group
labels.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as rngmod
from .data import Dataset
from .errors import BandwidthTooSmall, GroupTooSmall, PlmError, RankDeficientError
from .estimator import PlmFit, _assemble, _CenteredDesign, center_within_cells, residualize
from .estimator import fit as plm_fit
from .partition import PartitionPlan, ZSpec
from .smoother import (
    DEFAULT_DEGREE,
    DEFAULT_GRID_SIZE,
    EPANECHNIKOV,
    CurveEstimate,
    candidate_bandwidths,
    default_grid,
    gcv_scores,
    kernel_spec,
    local_poly_fit,
    pick_bandwidth,
)

SIDES = ("two", "less", "greater")
MIN_GROUP_SIZE = 10
# bootstrap replicates are processed in fixed-size blocks so that floating
# point results do not depend on how blocks are spread over workers
BLOCK = 64


@dataclass(frozen=True)
class LinearHypothesis:
    """``A beta = 0`` with ``A`` of shape ``k x p`` and full row rank."""

    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        if a.shape[0] > a.shape[1]:
            raise RankDeficientError(f"{a.shape[0]} constraints on {a.shape[1]} coefficients")
        s = np.linalg.svd(a, compute_uv=False)
        if s.size == 0 or s[-1] <= 1e-12 * max(s[0], 1.0):
            raise RankDeficientError("constraint matrix does not have full row rank")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def k(self) -> int:
        return self.a.shape[0]

    @classmethod
    def zero(cls, names, which) -> "LinearHypothesis":
        """Hypothesis that the coefficients named in ``which`` are all zero."""
        names = list(names)
        rows = []
        for w in which:
            if w not in names:
                raise PlmError(f"unknown coefficient {w!r}; known: {names}")
            r = np.zeros(len(names))
            r[names.index(w)] = 1.0
            rows.append(r)
        return cls(np.array(rows))

    def null_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the null space of ``A``."""
        _, _, vt = np.linalg.svd(self.a)
        return vt[self.k:].T


@dataclass(frozen=True, eq=False)
class TestReport:
    statistic: float
    scaled_statistic: float
    p_bootstrap: float | None
    n_bootstrap: int
    bootstrap_draws: np.ndarray
    seed: int
    sided: str = "two"
    df: int | None = None
    p_asymptotic: float | None = None
    scaling: float = 1.0
    bandwidth: float | None = None
    centering_bandwidth: float | None = None
    curves: tuple[CurveEstimate, CurveEstimate] | None = field(default=None, repr=False)

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        d = {
            "statistic": self.statistic,
            "scaled_statistic": self.scaled_statistic,
            "scaling": self.scaling,
            "df": self.df,
            "p_asymptotic": self.p_asymptotic,
            "p_bootstrap": self.p_bootstrap,
            "n_bootstrap": self.n_bootstrap,
            "sided": self.sided,
            "seed": self.seed,
            "bootstrap_draws": [float(v) for v in self.bootstrap_draws],
        }
        if self.bandwidth is not None:
            d["bandwidth"] = self.bandwidth
            d["centering_bandwidth"] = self.centering_bandwidth
        return d


def bootstrap_pvalue(draws, observed) -> float:
    """``(1 + #{draws >= observed}) / (N + 1)``."""
    draws = np.asarray(draws)
    return float(1 + np.count_nonzero(draws >= observed)) / (draws.size + 1)


def _run_blocks(fn, n_total: int, n_jobs: int) -> np.ndarray:
    blocks = [(s, min(s + BLOCK, n_total)) for s in range(0, n_total, BLOCK)]
    if n_jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(lambda b: fn(*b), blocks))
    else:
        parts = [fn(*b) for b in blocks]
    return np.concatenate(parts) if parts else np.zeros(0)


# ----------------------------------------------------------------------------
# linear hypotheses
# ----------------------------------------------------------------------------


def restricted_fit(dataset: Dataset, plan: PartitionPlan, hyp: LinearHypothesis) -> PlmFit:
    """Profile least squares under ``A beta = 0`` via ``beta = B theta``."""
    if hyp.a.shape[1] != dataset.p:
        raise PlmError(f"hypothesis has {hyp.a.shape[1]} columns, model has {dataset.p} coefficients")
    xc = center_within_cells(dataset.x, plan)
    yc = center_within_cells(dataset.y, plan)
    _CenteredDesign(xc)  # unrestricted Gram must be nonsingular too
    b = hyp.null_basis()
    design = _CenteredDesign(xc @ b)
    if b.shape[1]:
        beta = b @ design.solve(yc)
        cov_unscaled = b @ design.inverse_gram() @ b.T
    else:
        beta = np.zeros(dataset.p)
        cov_unscaled = np.zeros((dataset.p, dataset.p))
    return _assemble(dataset, plan, beta, 0.5 * (cov_unscaled + cov_unscaled.T), xc.T @ xc)


def t1_statistic(rss0: float, rss1: float) -> float:
    """``(RSS0 - RSS1) / RSS1``."""
    if not rss1 > 0:
        raise PlmError("unrestricted fit is perfect (RSS1 = 0); statistic undefined")
    return (rss0 - rss1) / rss1


def t1_test(dataset: Dataset, plan: PartitionPlan, hyp: LinearHypothesis,
            n_bootstrap: int = 0, seed: int = 0, n_jobs: int = 1) -> TestReport:
    """Test ``A beta = 0``.

    The statistic is scaled by ``n - J`` (which is ``(I-1)/I * n`` for equal
    cells) and referred to chi-square with ``k`` degrees of freedom. For the
    bootstrap, null-fit residuals are resampled with replacement, recentred,
    added to the null fitted values, and the statistic recomputed.
    """
    full = plm_fit(dataset, plan)
    null = restricted_fit(dataset, plan, hyp)
    t = t1_statistic(null.rss, full.rss)
    scaling = float(plan.n_effective - plan.j_effective)
    scaled = scaling * t
    p_asym = float(stats.chi2.sf(scaled, hyp.k))

    draws = np.zeros(0)
    p_boot = None
    if n_bootstrap > 0:
        draws = _t1_bootstrap(dataset, plan, hyp, null, n_bootstrap, seed, n_jobs)
        p_boot = bootstrap_pvalue(draws, t)
    return TestReport(
        statistic=float(t), scaled_statistic=float(scaled), p_bootstrap=p_boot,
        n_bootstrap=int(n_bootstrap), bootstrap_draws=draws, seed=int(seed), sided="two",
        df=hyp.k, p_asymptotic=p_asym, scaling=scaling,
    )


def _t1_bootstrap(dataset, plan, hyp, null, n_bootstrap, seed, n_jobs):
    n = dataset.n
    xc = center_within_cells(dataset.x, plan)
    d1 = _CenteredDesign(xc)
    d0 = _CenteredDesign(xc @ hyp.null_basis())
    fitted0 = dataset.y - null.residuals
    resid0 = np.asarray(null.residuals)
    key = rngmod.derive_key(seed, rngmod.STREAM_T1_BOOT)

    def block(lo, hi):
        eps = np.empty((n, hi - lo))
        for j, b in enumerate(range(lo, hi)):
            e = resid0[rngmod.indexed(key, b).integers(0, n, n)]
            eps[:, j] = e - e.mean()
        yc = center_within_cells(fitted0[:, None] + eps, plan)
        r1 = d1.residual(yc)
        r0 = d0.residual(yc)
        rss1 = np.einsum("ij,ij->j", r1, r1)
        rss0 = np.einsum("ij,ij->j", r0, r0)
        return (rss0 - rss1) / rss1

    return _run_blocks(block, n_bootstrap, n_jobs)


# ----------------------------------------------------------------------------
# two-curve comparison
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SmootherConfig:
    """Second-stage smoothing settings.

    ``bandwidth`` is ``"gcv"`` (pooled GCV, then multiplied by
    ``undersmooth``) or a fixed positive bandwidth used as given.
    """

    kernel: str = EPANECHNIKOV
    degree: int = DEFAULT_DEGREE
    bandwidth: str | float = "gcv"
    undersmooth: float = 0.8
    grid_size: int = DEFAULT_GRID_SIZE


def d_n(h: float, kernel=EPANECHNIKOV) -> float:
    """Centering constant ``r + log(int K'^2 / (4 pi int K^2)) / r`` with ``r = sqrt(-2 log h)``."""
    if not 0 < h < 1:
        raise PlmError(f"centering needs 0 < h < 1 on the unit-range scale, got h={h!r}")
    k = kernel_spec(kernel)
    r = math.sqrt(-2.0 * math.log(h))
    return r + math.log(k.int_Kprime2 / (4.0 * math.pi * k.int_K2)) / r


def standardized_difference(curve1: CurveEstimate, curve0: CurveEstimate) -> np.ndarray:
    if curve1.grid.shape != curve0.grid.shape or not np.array_equal(curve1.grid, curve0.grid):
        raise PlmError("curves must share the evaluation grid")
    v = curve1.var_ghat + curve0.var_ghat
    if not np.all(v > 0):
        raise PlmError(f"zero variance of the curve difference at u={curve1.grid[np.argmin(v > 0)]:.6g}")
    return (curve1.ghat - curve0.ghat) / np.sqrt(v)


def t2_statistic(curve1: CurveEstimate, curve0: CurveEstimate, h: float,
                 kernel=EPANECHNIKOV, sided: str = "two") -> float:
    """``sqrt(-2 log h) * (S - d_n)`` with ``S`` the sup of the standardized difference.

    ``sided="greater"`` uses ``sup D``, ``"less"`` uses ``sup -D`` and
    ``"two"`` uses ``sup |D|``, where ``D = (g1 - g0) / sd``.
    """
    if sided not in SIDES:
        raise PlmError(f"sided must be one of {SIDES}")
    dn = d_n(h, kernel)
    d = standardized_difference(curve1, curve0)
    s = {"two": np.max(np.abs(d)), "greater": np.max(d), "less": np.max(-d)}[sided]
    return math.sqrt(-2.0 * math.log(h)) * (float(s) - dn)


def confidence_band(curve1: CurveEstimate, curve0: CurveEstimate, h: float, kernel,
                    alpha: float, q_boot: float):
    """Simultaneous band for ``g1 - g0``; returns ``(difference, lower, upper)``.

    ``q_boot`` is the ``1 - alpha`` quantile of the bootstrap statistics.
    """
    if not 0 < alpha < 1:
        raise PlmError("alpha must be in (0, 1)")
    dn = d_n(h, kernel)
    sd = np.sqrt(curve1.var_ghat + curve0.var_ghat)
    half = (dn + q_boot / math.sqrt(-2.0 * math.log(h))) * sd
    diff = curve1.ghat - curve0.ghat
    return diff, diff - half, diff + half


def band_from_report(report: TestReport, alpha: float, kernel=EPANECHNIKOV):
    """Band from a :func:`t2_test` report using its bootstrap quantile."""
    if report.curves is None or report.n_bootstrap == 0:
        raise PlmError("report carries no curves or no bootstrap draws")
    q = float(np.quantile(report.bootstrap_draws, 1.0 - alpha))
    c1, c0 = report.curves
    return confidence_band(c1, c0, report.centering_bandwidth, kernel, alpha, q)


class _CurvePipeline:
    """Fixed pieces of the curve test: sorted data, grid and GCV scores.

    The bandwidth is chosen by GCV on the pooled ``(Zc, Y*)``, among the
    candidates at least twice the largest gap inside either group so that
    both group fits stay nonsingular. Resampling the labels leaves the pooled
    scores unchanged, so they are computed once and only the admissible range
    is re-derived per sample.
    """

    def __init__(self, ystar, zc, labels, config: SmootherConfig):
        o = np.argsort(zc, kind="stable")
        self.xs = np.ascontiguousarray(zc[o])
        self.ys = np.ascontiguousarray(ystar[o])
        self.labels = np.asarray(labels)[o]
        self.config = config
        self.span = self.xs[-1] - self.xs[0]
        if not self.span > 0:
            raise PlmError("continuous covariate has zero range")
        if config.bandwidth == "gcv":
            self.cands = candidate_bandwidths(self.xs)
            self.scores = gcv_scores(self.xs, self.ys, config.degree, self.cands, config.kernel)
        else:
            h = float(config.bandwidth)
            if not h > 0:
                raise PlmError(f"bandwidth must be positive, got {h}")
            self.fixed = h
        self.grid = default_grid(self.xs, config.grid_size)

    def bandwidth(self, labels_sorted) -> float:
        if self.config.bandwidth != "gcv":
            return self.fixed
        gap = 0.0
        for level in np.unique(labels_sorted):
            xg = self.xs[labels_sorted == level]
            if xg.size > 1:
                gap = max(gap, float(np.max(np.diff(xg))))
        keep = self.cands >= 2.0 * gap
        if not keep.any():
            keep[-1] = True
        h = pick_bandwidth(self.cands[keep], self.scores[keep], self.ys)
        return self.config.undersmooth * h

    def curves(self, labels_sorted, h):
        out = []
        for level in (0, 1):
            m = labels_sorted == level
            if np.count_nonzero(m) < MIN_GROUP_SIZE:
                raise GroupTooSmall(
                    f"group {level} has {np.count_nonzero(m)} observations; need >= {MIN_GROUP_SIZE}"
                )
            out.append(local_poly_fit(self.xs[m], self.ys[m], self.config.degree, h,
                                      self.config.kernel, self.grid, level=level, presorted=True))
        return out[1], out[0]

    def statistic(self, labels_sorted, sided):
        h = self.bandwidth(labels_sorted)
        c1, c0 = self.curves(labels_sorted, h)
        return t2_statistic(c1, c0, h / self.span, self.config.kernel, sided)


MAX_REDRAWS = 100


def _t2_draw(pipe: _CurvePipeline, gen, n, sided):
    # a resample whose groups cannot be smoothed on the whole grid is redrawn
    # from the same generator, so draw b still depends only on (seed, b)
    for _ in range(MAX_REDRAWS):
        star = pipe.labels[gen.integers(0, n, n)]
        try:
            return pipe.statistic(star, sided)
        except (BandwidthTooSmall, GroupTooSmall):
            continue
    raise PlmError(f"{MAX_REDRAWS} consecutive bootstrap resamples could not be smoothed")


def binary_labels(dataset: Dataset, column: str) -> np.ndarray:
    """Codes 0/1 for a two-level categorical column."""
    codes = dataset.categorical(column)
    lv = np.unique(codes)
    if lv.size != 2:
        raise PlmError(f"curve test needs a binary categorical column; {column!r} has {lv.size} levels")
    return (codes == lv[1]).astype(np.int64)


def t2_test(dataset: Dataset, zspec: ZSpec, plan: PartitionPlan, fit: PlmFit,
            config: SmootherConfig | None = None, n_bootstrap: int = 0, seed: int = 0,
            sided: str = "two", n_jobs: int = 1) -> TestReport:
    """Compare ``g(. | Zd=1)`` with ``g(. | Zd=0)`` on ``Y* = Y - X beta``.

    Bootstrap samples redraw every label i.i.d. from the observed labels and
    recompute the whole curve statistic; ``beta`` stays at its fitted value.
    The bandwidth in the centering constant is the smoothing bandwidth
    expressed as a fraction of the range of the continuous covariate.
    """
    config = config or SmootherConfig()
    if sided not in SIDES:
        raise PlmError(f"sided must be one of {SIDES}")
    if len(zspec.continuous) != 1 or len(zspec.categorical) != 1:
        raise PlmError("curve test needs exactly one continuous and one categorical column")
    labels = binary_labels(dataset, zspec.categorical[0])
    zc = dataset.continuous(zspec.continuous[0])
    pipe = _CurvePipeline(residualize(dataset, fit), zc, labels, config)

    h = pipe.bandwidth(pipe.labels)
    c1, c0 = pipe.curves(pipe.labels, h)
    t = t2_statistic(c1, c0, h / pipe.span, config.kernel, sided)

    draws = np.zeros(0)
    p_boot = None
    if n_bootstrap > 0:
        key = rngmod.derive_key(seed, rngmod.STREAM_T2_BOOT)
        n = dataset.n

        def block(lo, hi):
            out = np.empty(hi - lo)
            for j, b in enumerate(range(lo, hi)):
                out[j] = _t2_draw(pipe, rngmod.indexed(key, b), n, sided)
            return out

        draws = _run_blocks(block, n_bootstrap, n_jobs)
        p_boot = bootstrap_pvalue(draws, t)
    return TestReport(
        statistic=float(t), scaled_statistic=float(t), p_bootstrap=p_boot,
        n_bootstrap=int(n_bootstrap), bootstrap_draws=draws, seed=int(seed), sided=sided,
        bandwidth=h, centering_bandwidth=h / pipe.span, curves=(c1, c0),
    )
