import math

import numpy as np
import pytest
from scipy import stats as sps

from chafee_exit import stats
from chafee_exit.exit_mc import ExitRecord


def recs(values, eps=0.5, cause="large_jump"):
    return [ExitRecord(i, eps, v, v, 1, cause) for i, v in enumerate(values)]


def test_laplace_of_exponential():
    x = np.random.default_rng(0).exponential(size=20_000)
    for theta in (0.5, 1.0, 2.0):
        m, se = stats.laplace_estimate(x, theta)
        assert abs(m - 1 / (1 + theta)) < 3 * se


def test_laplace_jackknife_equals_plain_se():
    # for a sample mean the jackknife s.e. is the usual s / sqrt(n)
    x = np.random.default_rng(1).exponential(size=50)
    m, se = stats.laplace_estimate(x, 1.0)
    y = np.exp(-x)
    assert m == pytest.approx(y.mean())
    assert se == pytest.approx(y.std(ddof=1) / math.sqrt(y.size), rel=1e-12)


def test_laplace_edge_cases():
    assert stats.laplace_estimate([0.0], 1.0) == (1.0, 0.0)
    with pytest.raises(ValueError):
        stats.laplace_estimate([1.0], -1.0)
    with pytest.raises(ValueError):
        stats.laplace_estimate(recs([1.0], cause="censored"), 1.0)


def test_laplace_skips_censored():
    r = recs([1.0, 2.0]) + recs([100.0], cause="censored")
    m, _ = stats.laplace_estimate(r, 1.0)
    assert m == pytest.approx((math.exp(-1) + math.exp(-2)) / 2)


def test_ks_matches_scipy():
    x = np.random.default_rng(2).exponential(size=500) * 1.1
    assert stats.ks_exponential(x) == pytest.approx(sps.kstest(x, "expon").statistic, rel=1e-12)
    with pytest.raises(ValueError):
        stats.ks_exponential([])


def test_power_law_exact():
    eps = np.array([2**-4, 2**-5, 2**-6])
    slope, intercept, r2 = stats.fit_power_law(np.column_stack([eps, 3.0 * eps**-1.5]))
    assert slope == pytest.approx(-1.5) and intercept == pytest.approx(math.log(3.0))
    assert r2 == pytest.approx(1.0)


def test_power_law_validation():
    with pytest.raises(ValueError):
        stats.fit_power_law([(0.1, 1.0), (0.01, 2.0)])
    with pytest.raises(ValueError):
        stats.fit_power_law([(0.1, 1.0), (0.01, 2.0), (0.001, -1.0)])


def test_summarize():
    rng = np.random.default_rng(3)
    grid = [2**-4, 2**-5, 2**-6]
    rows = []
    for e in grid:
        tau = rng.exponential(size=400) * e**-1.5
        rows += [ExitRecord(i, e, t, t * e**1.5, 2, "large_jump") for i, t in enumerate(tau)]
    rows.append(ExitRecord(999, grid[0], 1e9, 1e9, 0, "censored"))
    out = stats.summarize(rows, grid, {e: e**1.5 for e in grid}, (1.0,))
    s = out.by_eps(grid[0])
    assert s.n == 401 and s.n_censored == 1 and s.censor_fraction == pytest.approx(1 / 401)
    assert s.mean_jumps == 2.0 and s.large_jump_fraction == 1.0
    assert abs(s.laplace[1.0][0] - 0.5) < 3 * s.laplace[1.0][1]
    assert out.slope == pytest.approx(-1.5, abs=0.15)
    with pytest.raises(KeyError):
        out.by_eps(0.3)


def test_summarize_empty_eps():
    out = stats.summarize([], [0.5], {})
    assert out.per_eps[0].n == 0 and math.isnan(out.per_eps[0].mean_tau) and out.slope is None
