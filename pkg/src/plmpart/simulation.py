"""Data-generating designs, Monte Carlo driver and summary metrics.

Three designs are provided:

``ex1``
    X (6 columns) and scalar Z jointly equicorrelated normal,
    ``beta = (1, 3, delta, 0, 0, 0)``, ``g(z) = 3 sin(2z)``, N(0, 1) errors.
``ex2``
    X equicorrelated normal, ``Z1 = X1 + N(0,1)``, ``Z2, Z3 = Z1 + N(0,1)/sqrt(n)``,
    ``beta = (1.5, 0.3, delta, 0, 0, 0)``,
    ``g = -5 sin(2 Z1) + Z2^2 - 2/3 + Z3``; cells follow the order of Z1.
``ex3``
    X Bernoulli(1/2), ``Zd ~ Bernoulli(0.7)``, ``Zc ~ U[-1, 1]``,
    ``beta = (3.5, 1.3, 0, 0, 0, 0)``, ``g = Zc^2 + 2 Zc + delta Zd exp(-16 Zc^2)``,
    N(0, 0.2^2) errors.

Replicate ``r`` of a study draws its data from the substream
``(seed, STREAM_DATA, r)``, so it is identical whether run alone or in a batch.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import rng as rngmod
from .data import Dataset
from .errors import PlmError
from .estimator import fit
from .inference import LinearHypothesis, SmootherConfig, t1_test, t2_test
from .partition import CATEGORICAL, COMPONENT, SINGLE, ZSpec, make_plan

EXAMPLES = ("ex1", "ex2", "ex3")
EX3_DELTA = 0.25


@dataclass(frozen=True)
class DgpSpec:
    example: str
    n: int
    rho: float = 0.5
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise PlmError(f"unknown example {self.example!r}; choose from {EXAMPLES}")
        if self.n < 20:
            raise PlmError("n must be at least 20")
        if not -1 < self.rho < 1:
            raise PlmError("rho must lie in (-1, 1)")
        if self.delta < 0:
            raise PlmError("delta must be nonnegative")


def true_beta(spec: DgpSpec) -> np.ndarray:
    if spec.example == "ex1":
        return np.array([1.0, 3.0, spec.delta, 0.0, 0.0, 0.0])
    if spec.example == "ex2":
        return np.array([1.5, 0.3, spec.delta, 0.0, 0.0, 0.0])
    return np.array([3.5, 1.3, 0.0, 0.0, 0.0, 0.0])


def zspec_for(example: str) -> ZSpec:
    if example == "ex1":
        return ZSpec(continuous=("z",), strategy=SINGLE)
    if example == "ex2":
        return ZSpec(continuous=("z1", "z2", "z3"), strategy=COMPONENT, order_col="z1")
    return ZSpec(continuous=("zc",), categorical=("zd",), strategy=CATEGORICAL)


def null_hypothesis(example: str) -> LinearHypothesis:
    """The last four coefficients are zero."""
    a = np.zeros((4, 6))
    a[np.arange(4), np.arange(2, 6)] = 1.0
    return LinearHypothesis(a)


def _equicorrelated(rng, n, dim, rho):
    cov = np.full((dim, dim), rho) + (1.0 - rho) * np.eye(dim)
    return rng.standard_normal((n, dim)) @ np.linalg.cholesky(cov).T


X_NAMES = tuple(f"x{j + 1}" for j in range(6))


def dgp(spec: DgpSpec) -> Dataset:
    """Draw one dataset; deterministic given ``spec.seed``."""
    rng = rngmod.substream(spec.seed, rngmod.STREAM_DATA)
    n = spec.n
    beta = true_beta(spec)
    if spec.example == "ex1":
        w = _equicorrelated(rng, n, 7, spec.rho)
        x, z = w[:, :6], w[:, 6]
        y = x @ beta + 3.0 * np.sin(2.0 * z) + rng.standard_normal(n)
        return Dataset(y, x, X_NAMES, z[:, None], ("z",))
    if spec.example == "ex2":
        x = _equicorrelated(rng, n, 6, spec.rho)
        z1 = x[:, 0] + rng.standard_normal(n)
        z2 = z1 + rng.standard_normal(n) / math.sqrt(n)
        z3 = z1 + rng.standard_normal(n) / math.sqrt(n)
        g = -5.0 * np.sin(2.0 * z1) + z2**2 - 2.0 / 3.0 + z3
        y = x @ beta + g + rng.standard_normal(n)
        return Dataset(y, x, X_NAMES, np.column_stack([z1, z2, z3]), ("z1", "z2", "z3"))
    x = rng.integers(0, 2, size=(n, 6)).astype(np.float64)
    zd = (rng.random(n) < 0.7).astype(np.int64)
    zc = rng.uniform(-1.0, 1.0, n)
    g = zc**2 + 2.0 * zc + spec.delta * zd * np.exp(-16.0 * zc**2)
    y = x @ beta + g + 0.2 * rng.standard_normal(n)
    return Dataset(y, x, X_NAMES, zc[:, None], ("zc",), zd[:, None], ("zd",), (("0", "1"),))


def replicate_spec(spec: DgpSpec, r: int) -> DgpSpec:
    """Spec of replicate ``r`` under master seed ``spec.seed``."""
    return replace(spec, seed=rngmod.derive_key(spec.seed, rngmod.STREAM_DATA, r) >> 1)


def replicate_test_seed(seed: int, r: int) -> int:
    return rngmod.derive_key(seed, rngmod.STREAM_TEST_SEED, r) >> 1


def _pmap(fn, items, n_jobs):
    items = list(items)
    if n_jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * n_jobs))))
    return [fn(it) for it in items]


def robust_sd(v, axis=0):
    """``(Q3 - Q1) / 1.349``."""
    q1, q3 = np.percentile(v, [25.0, 75.0], axis=axis)
    return (q3 - q1) / 1.349


@dataclass(frozen=True, eq=False)
class McResult:
    replicates: int
    ase_mean: float
    ase_sd: float
    mse_mean: float
    rsd: float
    per_coef_mean: np.ndarray
    per_coef_sd: np.ndarray
    per_coef_rsd: np.ndarray
    per_coef_sdm: np.ndarray
    per_coef_sdmad: np.ndarray
    sigma2_mean: float
    betas: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)
    rejection_rate: float | None = None


def _fit_replicate(args):
    spec, cell_size, r = args
    rs = replicate_spec(spec, r)
    ds = dgp(rs)
    f = fit(ds, make_plan(ds, zspec_for(spec.example), cell_size))
    return np.asarray(f.beta), f.se, f.sigma2


def run_mc(spec: DgpSpec, cell_size: int, replicates: int, n_jobs: int = 1) -> McResult:
    """Fit ``replicates`` independent datasets and summarize the estimates.

    ASE is the sum of absolute coefficient errors and MSE the sum of squared
    errors, per replicate; ``ase_sd`` is their standard deviation across
    replicates. ``per_coef_sdm`` is the median sandwich standard error and
    ``per_coef_sdmad`` the MAD of the sandwich standard errors scaled by 1.4826.
    """
    if replicates < 1:
        raise PlmError("need at least one replicate")
    out = _pmap(_fit_replicate, [(spec, cell_size, r) for r in range(replicates)], n_jobs)
    betas = np.array([o[0] for o in out])
    ses = np.array([o[1] for o in out])
    s2 = np.array([o[2] for o in out])
    err = betas - true_beta(spec)
    ase = np.abs(err).sum(axis=1)
    mse = (err**2).sum(axis=1)
    ddof = 1 if replicates > 1 else 0
    return McResult(
        replicates=replicates,
        ase_mean=float(ase.mean()),
        ase_sd=float(ase.std(ddof=ddof)),
        mse_mean=float(mse.mean()),
        rsd=float(robust_sd(ase)),
        per_coef_mean=betas.mean(axis=0),
        per_coef_sd=betas.std(axis=0, ddof=ddof),
        per_coef_rsd=robust_sd(betas),
        per_coef_sdm=np.median(ses, axis=0),
        per_coef_sdmad=stats.median_abs_deviation(ses, axis=0, scale="normal"),
        sigma2_mean=float(s2.mean()),
        betas=betas,
        ses=ses,
    )


@dataclass(frozen=True, eq=False)
class RateStudy:
    ns: tuple[int, ...]
    cell_sizes: tuple[int, ...]
    mse: np.ndarray  # (len(ns), len(cell_sizes))
    slope: float
    intercept: float


def rate_study(example: str, ns, cell_sizes, replicates: int, seed: int = 0,
               rho: float = 0.5, n_jobs: int = 1) -> RateStudy:
    """Slope of ``log(MSE) - log(I/(I-1))`` against ``log n`` over all cells."""
    ns, cell_sizes = tuple(ns), tuple(cell_sizes)
    delta = EX3_DELTA if example == "ex3" else 0.0
    mse = np.array([[run_mc(DgpSpec(example, n, rho, delta, seed), i, replicates, n_jobs).mse_mean
                     for i in cell_sizes] for n in ns])
    ln = np.repeat(np.log(ns), len(cell_sizes))
    lm = (np.log(mse) - np.log(np.array(cell_sizes) / (np.array(cell_sizes) - 1.0))[None, :]).ravel()
    slope, intercept = np.polyfit(ln, lm, 1)
    return RateStudy(ns, cell_sizes, mse, float(slope), float(intercept))


@dataclass(frozen=True, eq=False)
class NullStudy:
    scaled: np.ndarray  # sorted
    df: int
    ks_distance: float
    ks_pvalue: float
    rejection_5pct: float
    density_grid: np.ndarray
    density: np.ndarray


def _t1_null_replicate(args):
    spec, cell_size, r = args
    ds = dgp(replicate_spec(spec, r))
    plan = make_plan(ds, zspec_for(spec.example), cell_size)
    return t1_test(ds, plan, null_hypothesis(spec.example)).scaled_statistic


def null_distribution_study(spec: DgpSpec, cell_size: int, replicates: int,
                            n_jobs: int = 1) -> NullStudy:
    """Empirical null of the scaled linear-test statistic against chi-square(4)."""
    if spec.delta != 0:
        raise PlmError("null study needs delta = 0")
    vals = np.sort(_pmap(_t1_null_replicate, [(spec, cell_size, r) for r in range(replicates)], n_jobs))
    ks = stats.kstest(vals, stats.chi2(4).cdf)
    grid = np.linspace(0.0, max(20.0, float(vals[-1])), 200)
    dens = stats.gaussian_kde(vals)(grid) if vals.size > 1 else np.zeros_like(grid)
    return NullStudy(vals, 4, float(ks.statistic), float(ks.pvalue),
                     float(np.mean(vals > stats.chi2.ppf(0.95, 4))), grid, dens)


@dataclass(frozen=True, eq=False)
class PowerCurve:
    deltas: np.ndarray
    cell_size: int
    rejection_asymptotic: np.ndarray | None
    rejection_bootstrap: np.ndarray
    level: float


def _power_replicate(args):
    test, spec, cell_size, r, n_bootstrap, config, sided = args
    ds = dgp(replicate_spec(spec, r))
    zs = zspec_for(spec.example)
    plan = make_plan(ds, zs, cell_size)
    tseed = replicate_test_seed(spec.seed, r)
    if test == "t1":
        rep = t1_test(ds, plan, null_hypothesis(spec.example), n_bootstrap, tseed)
        return rep.p_asymptotic, rep.p_bootstrap
    rep = t2_test(ds, zs, plan, fit(ds, plan), config, n_bootstrap, tseed, sided)
    return None, rep.p_bootstrap


def rejections(test: str, spec: DgpSpec, cell_size: int, replicates: int, n_bootstrap: int,
               config: SmootherConfig | None = None, sided: str = "two", n_jobs: int = 1):
    """Per-replicate ``(p_asymptotic, p_bootstrap)`` pairs for one design point."""
    args = [(test, spec, cell_size, r, n_bootstrap, config, sided) for r in range(replicates)]
    return _pmap(_power_replicate, args, n_jobs)


def power_curve(test: str, spec: DgpSpec, deltas, cell_size: int, replicates: int,
                n_bootstrap: int, level: float = 0.05, config: SmootherConfig | None = None,
                sided: str = "two", n_jobs: int = 1) -> PowerCurve:
    """Rejection frequency at ``level`` for each ``delta``.

    ``test`` is ``"t1"`` (linear hypothesis, ``ex1``/``ex2``; asymptotic and
    bootstrap p-values) or ``"t2"`` (curve comparison, ``ex3``; bootstrap
    only). Replicate ``r`` reuses the same random numbers at every delta.
    """
    if test not in ("t1", "t2"):
        raise PlmError("test must be 't1' or 't2'")
    if test == "t2" and spec.example != "ex3":
        raise PlmError("the curve test needs the ex3 design")
    deltas = np.asarray(deltas, dtype=np.float64)
    if not np.any(deltas == 0):
        raise PlmError("delta grid must include 0")
    asym, boot = [], []
    for d in deltas:
        res = rejections(test, replace(spec, delta=float(d)), cell_size, replicates,
                         n_bootstrap, config, sided, n_jobs)
        if test == "t1":
            asym.append(np.mean([p[0] < level for p in res]))
        if n_bootstrap > 0:
            boot.append(np.mean([p[1] < level for p in res]))
    return PowerCurve(deltas, cell_size, np.array(asym) if asym else None,
                      np.array(boot) if boot else np.full(deltas.size, np.nan), level)


@dataclass(frozen=True, eq=False)
class CurveNullStudy:
    """Empirical null of the curve statistic and one bootstrap approximation of it."""

    empirical: np.ndarray
    bootstrap: np.ndarray


def _t2_stat_replicate(args):
    spec, cell_size, r, config, sided = args
    ds = dgp(replicate_spec(spec, r))
    zs = zspec_for("ex3")
    plan = make_plan(ds, zs, cell_size)
    return t2_test(ds, zs, plan, fit(ds, plan), config, 0, 0, sided).statistic


def curve_null_study(spec: DgpSpec, cell_size: int, replicates: int, n_bootstrap: int,
                     config: SmootherConfig | None = None, sided: str = "two",
                     n_jobs: int = 1) -> CurveNullStudy:
    """Null statistics at ``delta = 0`` plus bootstrap draws from replicate 0 of ``spec``."""
    null = replace(spec, delta=0.0)
    emp = _pmap(_t2_stat_replicate, [(null, cell_size, r, config, sided) for r in range(replicates)],
                n_jobs)
    ds = dgp(replicate_spec(spec, 0))
    zs = zspec_for("ex3")
    plan = make_plan(ds, zs, cell_size)
    rep = t2_test(ds, zs, plan, fit(ds, plan), config, n_bootstrap,
                  replicate_test_seed(spec.seed, 0), sided)
    return CurveNullStudy(np.sort(emp), np.sort(rep.bootstrap_draws))
