import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from plmpart.data import Dataset
from plmpart.errors import GroupTooSmall, PlmError, RankDeficientError
from plmpart.estimator import center_within_cells, fit
from plmpart.inference import (
    LinearHypothesis,
    SmootherConfig,
    band_from_report,
    bootstrap_pvalue,
    confidence_band,
    d_n,
    restricted_fit,
    t1_statistic,
    t1_test,
    t2_statistic,
    t2_test,
)
from plmpart.partition import ZSpec, make_plan
from plmpart.simulation import DgpSpec, dgp, null_hypothesis, replicate_spec, zspec_for
from plmpart.smoother import CurveEstimate

from conftest import make_dataset


def _ex1(n=200, seed=0, delta=0.0, I=5):
    ds = dgp(DgpSpec("ex1", n, delta=delta, seed=seed))
    return ds, make_plan(ds, zspec_for("ex1"), I)


def _ex3(n=200, seed=0, delta=0.0, I=5):
    ds = dgp(DgpSpec("ex3", n, delta=delta, seed=seed))
    zs = zspec_for("ex3")
    plan = make_plan(ds, zs, I)
    return ds, zs, plan, fit(ds, plan)


# --- hypotheses and restricted fits -------------------------------------------


def test_hypothesis_validation():
    with pytest.raises(RankDeficientError):
        LinearHypothesis([[1, 0], [2, 0]])
    with pytest.raises(RankDeficientError):
        LinearHypothesis(np.eye(3)[:, :2])
    with pytest.raises(PlmError, match="unknown coefficient"):
        LinearHypothesis.zero(["a", "b"], ["c"])
    h = LinearHypothesis.zero(["a", "b", "c"], ["c", "a"])
    assert_array_equal(h.a, [[0, 0, 1], [1, 0, 0]])
    assert_allclose(h.a @ h.null_basis(), 0, atol=1e-14)


def test_fully_constrained():
    ds, plan = _ex1(60)
    r = restricted_fit(ds, plan, LinearHypothesis(np.eye(6)))
    assert_array_equal(r.beta, 0.0)
    yc = center_within_cells(ds.y, plan)
    assert r.rss == pytest.approx(float(yc @ yc), rel=1e-12)


def test_column_deletion_oracle(rng):
    n = 40
    x = rng.standard_normal((n, 2))
    z = rng.uniform(size=n)
    y = x @ [1.0, 0.5] + np.cos(3 * z) + rng.standard_normal(n)
    ds = make_dataset(y, x, z=z)
    plan = make_plan(ds, ZSpec(("z",)), 4)
    r = restricted_fit(ds, plan, LinearHypothesis([[0.0, 1.0]]))
    f1 = fit(make_dataset(y, x[:, :1], z=z), plan)
    assert_allclose(r.beta, [f1.beta[0], 0.0], rtol=1e-12, atol=1e-15)
    assert r.rss == pytest.approx(f1.rss, rel=1e-12)


def test_projection_relation():
    ds, plan = _ex1(100, seed=4)
    a = np.array([[0, 0, 1.0, -1, 0, 0], [0, 1, 0, 0, 0, 2.0]])
    f1 = fit(ds, plan)
    r = restricted_fit(ds, plan, LinearHypothesis(a))
    gi = np.linalg.inv(f1.gram)
    oracle = f1.beta - gi @ a.T @ np.linalg.solve(a @ gi @ a.T, a @ f1.beta)
    assert_allclose(r.beta, oracle, rtol=1e-9, atol=1e-12)
    assert_allclose(a @ r.beta, 0.0, atol=1e-10)


@st.composite
def _problem(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    p = draw(st.integers(2, 4))
    k = draw(st.integers(1, p))
    I = draw(st.sampled_from([2, 3, 5]))
    n = draw(st.integers(4 * I + p, 60))
    return seed, p, k, I, n


@given(_problem(), st.floats(0.01, 100.0), st.booleans())
def test_nesting_scale_and_constraint(prob, c, negate):
    seed, p, k, I, n = prob
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    z = rng.uniform(size=n)
    y = x @ rng.standard_normal(p) + rng.standard_normal(n)
    a = rng.standard_normal((k, p))
    hyp = LinearHypothesis(a)
    ds = make_dataset(y, x, z=z)
    plan = make_plan(ds, ZSpec(("z",)), I)
    r0, r1 = restricted_fit(ds, plan, hyp), fit(ds, plan)
    assert r0.rss >= r1.rss * (1 - 1e-12)
    assert np.max(np.abs(a @ r0.beta)) <= 1e-10 * max(1.0, np.max(np.abs(r0.beta)))
    t = t1_test(ds, plan, hyp)
    assert t.statistic >= -1e-12
    scale = -c if negate else c
    t2 = t1_test(make_dataset(scale * y, x, z=z), plan, hyp)
    assert_allclose(t2.statistic, t.statistic, rtol=1e-9, atol=1e-13)


# --- T1 -----------------------------------------------------------------------


def test_t1_statistic_examples():
    assert t1_statistic(3.0, 3.0) == 0.0
    assert t1_statistic(2.0, 1.0) == 1.0
    with pytest.raises(PlmError):
        t1_statistic(1.0, 0.0)


def test_bootstrap_pvalue():
    assert bootstrap_pvalue([1, 2, 3], 2.5) == pytest.approx(2 / 4)
    assert bootstrap_pvalue([1, 2, 3], 10) == pytest.approx(1 / 4)
    assert bootstrap_pvalue([1, 2, 3], -1) == 1.0


def test_t1_report_fields():
    ds, plan = _ex1(200)
    hyp = null_hypothesis("ex1")
    rep = t1_test(ds, plan, hyp, n_bootstrap=99, seed=3)
    assert rep.df == 4
    assert rep.scaling == 200 - 40 == pytest.approx((5 - 1) / 5 * 200)
    assert rep.scaled_statistic == pytest.approx(rep.scaling * rep.statistic)
    assert rep.p_asymptotic == pytest.approx(stats.chi2.sf(rep.scaled_statistic, 4))
    assert rep.bootstrap_draws.shape == (99,)
    assert 1 / 100 <= rep.p_bootstrap <= 1
    assert rep.p_bootstrap == bootstrap_pvalue(rep.bootstrap_draws, rep.statistic)
    assert np.all(rep.bootstrap_draws >= 0)
    assert t1_test(ds, plan, hyp).p_bootstrap is None


def test_t1_unequal_cells_scaling():
    ds, _ = _ex1(203)
    plan = make_plan(ds, zspec_for("ex1"), 5)
    rep = t1_test(ds, plan, null_hypothesis("ex1"))
    i_eff = 203 / plan.n_cells
    assert rep.scaling == pytest.approx((i_eff - 1) / i_eff * 203)


def test_t1_bootstrap_reproducible_across_jobs():
    ds, plan = _ex1(150)
    hyp = null_hypothesis("ex1")
    a = t1_test(ds, plan, hyp, 200, seed=17, n_jobs=1)
    b = t1_test(ds, plan, hyp, 200, seed=17, n_jobs=3)
    c = t1_test(ds, plan, hyp, 200, seed=18, n_jobs=1)
    assert_array_equal(a.bootstrap_draws, b.bootstrap_draws)
    assert a.p_bootstrap == b.p_bootstrap
    assert not np.array_equal(a.bootstrap_draws, c.bootstrap_draws)


def test_t1_bootstrap_prefix_stable():
    # draw b depends only on (seed, b): a longer run extends a shorter one
    ds, plan = _ex1(120)
    hyp = null_hypothesis("ex1")
    a = t1_test(ds, plan, hyp, 70, seed=5).bootstrap_draws
    b = t1_test(ds, plan, hyp, 130, seed=5).bootstrap_draws
    assert_array_equal(a, b[:70])


def test_t1_bootstrap_recenters_null_residuals():
    # under the exact null with no noise in beta, bootstrap statistics are tiny but finite
    ds, plan = _ex1(100, delta=0.0)
    rep = t1_test(ds, plan, null_hypothesis("ex1"), 50, seed=1)
    assert np.all(np.isfinite(rep.bootstrap_draws))


def test_t1_bootstrap_pvalues_uniform_under_null():
    ps = []
    for r in range(400):
        ds = dgp(replicate_spec(DgpSpec("ex1", 100, seed=21), r))
        plan = make_plan(ds, zspec_for("ex1"), 5)
        ps.append(t1_test(ds, plan, null_hypothesis("ex1"), 99, seed=r).p_bootstrap)
    assert stats.kstest(ps, "uniform").pvalue > 0.01


def test_t1_asymptotic_and_bootstrap_p_agree():
    agree = 0
    for r in range(40):
        ds = dgp(replicate_spec(DgpSpec("ex1", 400, seed=77), r))
        plan = make_plan(ds, zspec_for("ex1"), 5)
        rep = t1_test(ds, plan, null_hypothesis("ex1"), 500, seed=r)
        agree += abs(rep.p_bootstrap - rep.p_asymptotic) <= 0.05
    assert agree >= 36


def test_t1_p_uniform_for_noise_block():
    # response unrelated to X: asymptotic p roughly uniform
    ps = []
    for s in range(200):
        rng = np.random.default_rng(s)
        n = 120
        x = rng.standard_normal((n, 3))
        z = rng.uniform(size=n)
        ds = make_dataset(np.sin(3 * z) + rng.standard_normal(n), x, z=z)
        plan = make_plan(ds, ZSpec(("z",)), 4)
        ps.append(t1_test(ds, plan, LinearHypothesis(np.eye(3))).p_asymptotic)
    assert stats.kstest(ps, "uniform").pvalue > 0.01


# --- T2 -----------------------------------------------------------------------


def test_d_n_value():
    assert d_n(0.1) == pytest.approx(1.39351, abs=1e-4)
    r = math.sqrt(-2 * math.log(0.1))
    assert d_n(0.1, "gaussian") == pytest.approx(r + math.log(1 / (8 * math.pi)) / r, rel=1e-14)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(PlmError):
            d_n(bad)


def _curve(ghat, var, grid=None):
    grid = np.linspace(0, 1, len(ghat)) if grid is None else grid
    return CurveEstimate(grid, np.asarray(ghat, float), np.asarray(var, float), 0.1, 2)


def test_t2_identical_curves():
    c = _curve([1.0, 2.0, 3.0], [0.1, 0.2, 0.1])
    r = math.sqrt(-2 * math.log(0.2))
    assert t2_statistic(c, c, 0.2) == pytest.approx(-r * d_n(0.2))


def test_t2_sides():
    c1 = _curve([1.0, 0.0, -3.0], [1.0, 1.0, 1.0])
    c0 = _curve([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    r = math.sqrt(-2 * math.log(0.1))
    dn = d_n(0.1)
    assert t2_statistic(c1, c0, 0.1, sided="two") == pytest.approx(r * (3 - dn))
    assert t2_statistic(c1, c0, 0.1, sided="greater") == pytest.approx(r * (1 - dn))
    assert t2_statistic(c1, c0, 0.1, sided="less") == pytest.approx(r * (3 - dn))
    with pytest.raises(PlmError):
        t2_statistic(_curve([1.0], [0.0]), _curve([1.0], [0.0]), 0.1)
    with pytest.raises(PlmError):
        t2_statistic(c1, _curve([0, 0, 0], [1, 1, 1], grid=np.arange(3.0)), 0.1)


def test_band_properties():
    c1 = _curve([1.0, 2.0, 0.5], [0.1, 0.3, 0.2])
    c0 = _curve([0.5, 1.0, 1.0], [0.2, 0.1, 0.1])
    d, lo, hi = confidence_band(c1, c0, 0.2, "epanechnikov", 0.05, 1.2)
    assert np.all(lo < d) and np.all(d < hi)
    assert_allclose(hi - d, d - lo)
    _, lo2, hi2 = confidence_band(c1, c0, 0.2, "epanechnikov", 0.01, 2.5)
    assert np.all(hi2 - lo2 > hi - lo)


def test_t2_report_and_band():
    ds, zs, plan, f = _ex3(200, seed=3)
    rep = t2_test(ds, zs, plan, f, n_bootstrap=64, seed=2)
    assert rep.df is None and rep.p_asymptotic is None
    assert rep.scaled_statistic == rep.statistic
    assert 0 < rep.centering_bandwidth < 1
    assert rep.bandwidth == pytest.approx(rep.centering_bandwidth * np.ptp(ds.zc[:, 0]))
    assert 1 / 65 <= rep.p_bootstrap <= 1
    d, lo, hi = band_from_report(rep, 0.05)
    assert d.shape == lo.shape == hi.shape == (100,)
    assert np.all(lo <= d) and np.all(d <= hi)


def test_t2_bandwidth_is_undersmoothed_gcv():
    from plmpart.smoother import gcv_bandwidth

    ds, zs, plan, f = _ex3(200, seed=8)
    rep = t2_test(ds, zs, plan, f)
    ystar = ds.y - ds.x @ f.beta
    assert rep.bandwidth == pytest.approx(0.8 * gcv_bandwidth(ds.zc[:, 0], ystar))
    fixed = t2_test(ds, zs, plan, f, SmootherConfig(bandwidth=0.4))
    assert fixed.bandwidth == 0.4


def test_t2_bandwidth_respects_group_gaps():
    # group 0 is dense everywhere, group 1 has a hole in the middle
    rng = np.random.default_rng(2)
    z0 = np.linspace(-1, 1, 150)
    z1 = np.concatenate([np.linspace(-1, -0.3, 25), np.linspace(0.3, 1, 25)])
    zc = np.concatenate([z0, z1])
    zd = np.repeat([0, 1], [150, 50])
    y = zc + 0.05 * rng.standard_normal(zc.size)
    x = rng.standard_normal((zc.size, 1))
    zs = ZSpec(("zc",), ("zd",), "categorical")
    ds = Dataset(y + x[:, 0], x, ("a",), zc[:, None], ("zc",), zd[:, None], ("zd",))
    plan = make_plan(ds, zs, 5)
    rep = t2_test(ds, zs, plan, fit(ds, plan), n_bootstrap=20, seed=1)
    assert rep.bandwidth >= 0.8 * 2 * 0.6 - 1e-12
    assert np.all(np.isfinite(rep.bootstrap_draws))


def test_t2_reproducible_across_jobs():
    ds, zs, plan, f = _ex3(150, seed=1)
    a = t2_test(ds, zs, plan, f, n_bootstrap=130, seed=9, n_jobs=1)
    b = t2_test(ds, zs, plan, f, n_bootstrap=130, seed=9, n_jobs=4)
    assert_array_equal(a.bootstrap_draws, b.bootstrap_draws)
    assert a.statistic == b.statistic


def test_t2_label_flip_swaps_sides():
    ds, zs, plan, f = _ex3(200, seed=6, delta=0.25)
    flipped = Dataset(ds.y, ds.x, ds.x_names, ds.zc, ds.zc_names, 1 - ds.zd, ds.zd_names)
    less = t2_test(ds, zs, plan, f, sided="less")
    greater = t2_test(flipped, zs, plan, f, sided="greater")
    assert less.statistic == greater.statistic


def test_t2_group_errors():
    n = 60
    rng = np.random.default_rng(0)
    zd = np.zeros(n, dtype=int)
    zd[:5] = 1
    zc = rng.uniform(-1, 1, n)
    x = rng.integers(0, 2, (n, 2)).astype(float)
    y = zc + rng.standard_normal(n)
    zs = ZSpec(("zc",), ("zd",), "categorical")
    ds = Dataset(y, x, ("a", "b"), zc[:, None], ("zc",), zd[:, None], ("zd",))
    with pytest.warns(UserWarning):
        plan = make_plan(ds, zs, 5)
    with pytest.raises(GroupTooSmall):
        t2_test(ds, zs, plan, fit(ds, plan))
    zd3 = rng.integers(0, 3, n)
    ds3 = Dataset(y, x, ("a", "b"), zc[:, None], ("zc",), zd3[:, None], ("zd",))
    plan3 = make_plan(ds3, zs, 4)
    with pytest.raises(PlmError, match="binary"):
        t2_test(ds3, zs, plan3, fit(ds3, plan3))
    with pytest.raises(PlmError, match="sided"):
        t2_test(ds3, zs, plan3, fit(ds3, plan3), sided="up")


@pytest.mark.slow
def test_band_covers_zero_under_null():
    cover = 0
    reps = 200
    for r in range(reps):
        ds = dgp(replicate_spec(DgpSpec("ex3", 200, seed=31), r))
        zs = zspec_for("ex3")
        plan = make_plan(ds, zs, 5)
        rep = t2_test(ds, zs, plan, fit(ds, plan), n_bootstrap=199, seed=r)
        _, lo, hi = band_from_report(rep, 0.05)
        cover += bool(np.all((lo <= 0) & (hi >= 0)))
    assert cover / reps >= 0.9
