import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate

from plmpart import _backend
from plmpart.errors import BandwidthTooSmall, PlmError
from plmpart.estimator import fit, residualize
from plmpart.partition import make_plan
from plmpart.simulation import DgpSpec, dgp, replicate_spec, zspec_for
from plmpart.smoother import (
    EPANECHNIKOV,
    GAUSSIAN,
    candidate_bandwidths,
    default_grid,
    gcv_bandwidth,
    gcv_score,
    kernel_constants,
    kernel_function,
    local_poly_fit,
    smooth,
)

FAMILIES = (EPANECHNIKOV, GAUSSIAN)


def _quad(f, family):
    lim = (-1.0, 1.0) if family == EPANECHNIKOV else (-np.inf, np.inf)
    return integrate.quad(f, *lim, epsabs=1e-13, epsrel=1e-13)[0]


def _kprime(family):
    if family == EPANECHNIKOV:
        return lambda t: -1.5 * t if abs(t) < 1 else 0.0
    return lambda t: -t * math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)


@pytest.mark.parametrize("family", FAMILIES)
def test_kernel_constants_quadrature(family):
    k = kernel_function(family)
    kp = _kprime(family)
    assert _quad(lambda t: float(k(t)), family) == pytest.approx(1.0, abs=1e-10)
    assert _quad(lambda t: t * t * float(k(t)), family) > 0
    k2, kp2 = kernel_constants(family)
    assert abs(_quad(lambda t: float(k(t)) ** 2, family) - k2) < 1e-8
    assert abs(_quad(lambda t: kp(t) ** 2, family) - kp2) < 1e-8


def test_kernel_constants_values():
    assert kernel_constants(EPANECHNIKOV) == (0.6, 1.5)
    k2, kp2 = kernel_constants(GAUSSIAN)
    assert k2 == pytest.approx(0.28209479, abs=1e-8)
    assert kp2 == pytest.approx(0.14104740, abs=1e-8)
    assert kp2 / (4 * math.pi * k2) == pytest.approx(1 / (8 * math.pi), rel=1e-14)


def test_unknown_family():
    with pytest.raises(PlmError):
        kernel_constants("triweight")


# --- local fits -----------------------------------------------------------------


def brute_local_fit(x, y, u, h, degree, family):
    """Weighted least squares at a single point, straight from the definition."""
    w = kernel_function(family)((x - u) / h)
    d = np.vander(x - u, degree + 1, increasing=True)
    sw = np.sqrt(w)
    pinv = np.linalg.pinv(d * sw[:, None])
    ell = pinv[0] * sw  # equivalent kernel weights
    return ell @ y, ell @ ell, ell


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_matches_brute_force(rng, family, degree):
    x = np.sort(rng.uniform(-1, 1, 80))
    y = np.cos(3 * x) + 0.1 * rng.standard_normal(80)
    u = np.linspace(-0.9, 0.9, 7)
    fitv, l2, lev, ok = smooth(x, y, u, 0.6, degree, family)
    assert ok.all()
    for i, ui in enumerate(u):
        g, n2, _ = brute_local_fit(x, y, ui, 0.6, degree, family)
        assert_allclose(fitv[i], g, rtol=1e-9, atol=1e-11)
        assert_allclose(l2[i], n2, rtol=1e-8)
    # self-weight at the data points
    _, _, lev, _ = smooth(x, y, x, 0.6, degree, family)
    for i in (0, 40, 79):
        assert_allclose(lev[i], brute_local_fit(x, y, x[i], 0.6, degree, family)[2][i], rtol=1e-8)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("degree", [0, 1, 2])
def test_reproduces_constants(rng, family, degree):
    x = rng.uniform(0, 3, 60)
    c = local_poly_fit(x, np.full(60, 2.5), degree, 0.7, family, default_grid(x))
    assert_allclose(c.ghat, 2.5, rtol=1e-12)


@given(st.integers(0, 3), st.integers(0, 3), st.sampled_from(FAMILIES),
       st.integers(0, 2**32 - 1))
def test_polynomial_reproduction(degree, extra, family, seed):
    rng = np.random.default_rng(seed)
    deg_poly = min(degree, extra)
    coef = rng.uniform(-2, 2, deg_poly + 1)
    x = rng.uniform(-1, 1, 70)
    y = np.polyval(coef, x)
    grid = default_grid(x, 25)
    c = local_poly_fit(x, y, degree, 0.8, family, grid)
    assert_allclose(c.ghat, np.polyval(coef, grid), atol=1e-8)
    assert np.all(c.var_ghat >= 0)


def test_variance_nonnegative_and_shape(rng):
    x = rng.uniform(0, 1, 150)
    y = np.sin(6 * x) + 0.3 * rng.standard_normal(150)
    grid = default_grid(x, 40)
    c = local_poly_fit(x, y, 2, 0.2, EPANECHNIKOV, grid, level="a")
    assert c.grid.shape == c.ghat.shape == c.var_ghat.shape == (40,)
    assert np.all(c.var_ghat > 0)
    assert c.level == "a"
    assert np.all(np.diff(c.grid) > 0)
    assert x.min() <= c.grid[0] and c.grid[-1] <= x.max()


def test_gaussian_large_h_is_global_fit(rng):
    x = rng.uniform(0, 2, 50)
    y = np.exp(x) + 0.1 * rng.standard_normal(50)
    grid = np.linspace(0.1, 1.9, 11)
    h = 1e4 * np.ptp(x)
    c = local_poly_fit(x, y, 2, h, GAUSSIAN, grid)
    glob = np.polyval(np.polyfit(x, y, 2), grid)
    assert_allclose(c.ghat, glob, atol=1e-6)


def test_bandwidth_too_small(rng):
    x = np.sort(rng.uniform(0, 1, 30))
    with pytest.raises(BandwidthTooSmall) as info:
        local_poly_fit(x, x**2, 2, 1e-4, EPANECHNIKOV, default_grid(x))
    assert info.value.bandwidth == 1e-4


def test_nonpositive_bandwidth():
    with pytest.raises(PlmError):
        smooth(np.arange(5.0), np.arange(5.0), [1.0], 0.0)


def test_pointwise_evaluation_bit_identical(rng):
    # each grid point is an independent solve: evaluating one by one is exact
    x = np.sort(rng.uniform(0, 1, 200))
    y = rng.standard_normal(200)
    grid = default_grid(x)
    whole = smooth(x, y, grid, 0.15, 2, EPANECHNIKOV, presorted=True)
    for i in (0, 17, 99):
        one = smooth(x, y, grid[i:i + 1], 0.15, 2, EPANECHNIKOV, presorted=True)
        assert one[0][0] == whole[0][i] and one[1][0] == whole[1][i]


@pytest.mark.skipif(_backend.compiled_kernel is None, reason="compiled kernel not built")
@pytest.mark.parametrize("family", [0, 1])
@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_backends_agree(rng, family, degree):
    x = np.sort(rng.uniform(-2, 2, 300))
    y = np.sin(x) + rng.standard_normal(300)
    u = np.concatenate([default_grid(x, 50), [x[0] - 5.0]])  # last point is far outside
    a = _backend.compiled_kernel(x, y, u, 0.4, degree, family)
    b = _backend.python_kernel(x, y, u, 0.4, degree, family)
    assert_array_equal(a[3], b[3])
    for va, vb in zip(a[:3], b[:3]):
        assert_allclose(va[:-1], vb[:-1], rtol=1e-10, atol=1e-12)
    if family == 0:
        assert not a[3][-1]  # no data under the kernel: singular


# --- bandwidth selection ----------------------------------------------------------


def brute_gcv(x, y, h, degree, family):
    n = x.size
    hat = np.array([brute_local_fit(x, y, xi, h, degree, family)[2] for xi in x])
    r = y - hat @ y
    return n * (r @ r) / (n - np.trace(hat)) ** 2


@pytest.mark.parametrize("family", FAMILIES)
def test_gcv_matches_brute_force(rng, family):
    x = rng.uniform(0, 1, 60)
    y = np.sin(5 * x) + 0.2 * rng.standard_normal(60)
    cands = candidate_bandwidths(x)
    ours = np.array([gcv_score(x, y, 2, h, family) for h in cands])
    brute = np.array([brute_gcv(x, y, h, 2, family) for h in cands])
    assert_allclose(ours, brute, rtol=1e-8)
    assert np.all(ours > 0)
    assert gcv_bandwidth(x, y, 2, family, cands) == cands[np.argmin(brute)]


def test_gcv_pure_noise_picks_largest():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, 200)
    y = rng.standard_normal(200)
    cands = candidate_bandwidths(x)
    brute = [brute_gcv(x, y, h, 2, EPANECHNIKOV) for h in cands]
    assert int(np.argmin(brute)) == len(cands) - 1  # frozen brute-force result on this seed
    assert gcv_bandwidth(x, y) == cands[-1]


def test_gcv_pure_noise_mostly_largest():
    top = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, 200)
        top += gcv_bandwidth(x, rng.standard_normal(200)) == candidate_bandwidths(x)[-1]
    assert top >= 15


def test_gcv_ties_go_to_larger_h(rng):
    x = rng.uniform(0, 1, 40)
    y = 1.0 + 2.0 * x  # every candidate fits exactly: all scores are zero
    cands = candidate_bandwidths(x)
    assert gcv_bandwidth(x, y, 2, EPANECHNIKOV, cands) == cands[-1]


def test_candidate_grid(rng):
    x = rng.uniform(0, 10, 100)
    c = candidate_bandwidths(x)
    assert c.size == 20
    assert c[0] == pytest.approx(2 * np.max(np.diff(np.sort(x))))
    assert c[-1] == pytest.approx(np.ptp(x))
    assert_allclose(np.diff(np.log(c)), np.diff(np.log(c))[0])


def test_gcv_skips_singular_candidates(rng):
    x = np.sort(rng.uniform(0, 1, 50))
    y = np.sin(3 * x)
    h = gcv_bandwidth(x, y, 2, EPANECHNIKOV, [1e-5, 0.3, 0.5])
    assert h in (0.3, 0.5)
    with pytest.raises(PlmError):
        gcv_bandwidth(x, y, 2, EPANECHNIKOV, [1e-5])


def test_sine_recovery_with_gcv():
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1, 500)
    y = np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal(500)
    h = gcv_bandwidth(x, y)
    grid = np.linspace(0.05, 0.95, 91)
    c = local_poly_fit(x, y, 2, h, EPANECHNIKOV, grid)
    assert np.max(np.abs(c.ghat - np.sin(2 * np.pi * grid))) < 0.1


def test_default_grid(rng):
    x = rng.standard_normal(1000)
    g = default_grid(x)
    lo, hi = np.percentile(x, [2, 98])
    assert g.size == 100 and g[0] == lo and g[-1] == hi


def test_rmse_decreases_with_n():
    def rmse(n, reps=8):
        out = []
        for r in range(reps):
            ds = dgp(replicate_spec(DgpSpec("ex1", n, seed=2), r))
            f = fit(ds, make_plan(ds, zspec_for("ex1"), 5))
            z = ds.zc[:, 0]
            ystar = residualize(ds, f)
            grid = default_grid(z, 50)
            c = local_poly_fit(z, ystar, 2, gcv_bandwidth(z, ystar), EPANECHNIKOV, grid)
            out.append(np.sqrt(np.mean((c.ghat - 3 * np.sin(2 * grid)) ** 2)))
        return np.mean(out)

    e100, e200, e400 = rmse(100), rmse(200), rmse(400)
    assert e100 > e200 > e400
