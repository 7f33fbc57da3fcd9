import math

import numpy as np
import pytest
from scipy import stats

from stlgcp.contrast import LocalFitResult
from stlgcp.covariance import Gneiting, SeparableExponential
from stlgcp.geometry import PointPattern, SpaceTimeWindow
from stlgcp.grf import (SpaceTimeGrid, cholesky_jittered, dense_covariance, grf_local, grf_simulate,
                        separable_factors)

W = SpaceTimeWindow.from_bounds((0, 1, 0, 1, 0, 50))


def local_result(models):
    return LocalFitResult(list(models), np.zeros(len(models)), np.ones(len(models), dtype=bool))


def test_grid_geometry():
    g = SpaceTimeGrid(W, 4, 5, 10)
    assert g.size == 200 and g.cell_volume * g.size == pytest.approx(50.0)
    cx, cy, ct = g.axes()
    assert cx[0] == pytest.approx(0.125) and ct[-1] == pytest.approx(47.5)
    ix, iy, it = g.cell_index([[0.0, 0.999, 50.0]])
    assert (ix[0], iy[0], it[0]) == (0, 4, 9)
    with pytest.raises(ValueError):
        SpaceTimeGrid(W, 0, 1, 1)


def test_kronecker_matches_dense_covariance():
    m = SeparableExponential(2.5, 0.3, 7.0)
    g = SpaceTimeGrid(W, 4, 4, 3)
    ls, lt = separable_factors(m, g)
    kron = m.sigma2 * np.kron(ls @ ls.T, lt @ lt.T)
    assert np.allclose(kron, dense_covariance(m, g.centres()), atol=1e-10, rtol=0)


def test_cholesky_jitter_rescues_semidefinite():
    v = np.array([1.0, 1.0])
    c = np.outer(v, v)
    lo = cholesky_jittered(c)
    assert np.allclose(lo @ lo.T, c, atol=1e-5)
    with pytest.raises(np.linalg.LinAlgError):
        cholesky_jittered(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_moments_and_normality():
    m = SeparableExponential(5.0, 0.1, 5.0)
    g = SpaceTimeGrid(W, 8, 8, 10)
    draws = np.array([grf_simulate(m, g, seed=s).values for s in range(100)])
    # one value per seed at a fixed cell gives independent samples
    cell = draws[:, 3, 4, 5]
    assert abs(cell.mean() + 2.5) < 3 * math.sqrt(5.0 / 100)
    assert draws.var(ddof=1) == pytest.approx(5.0, rel=0.1)
    assert stats.kstest((cell + 2.5) / math.sqrt(5.0), "norm").pvalue > 0.001
    assert abs(draws.mean() + 2.5) < 0.5


def test_lag_alpha_correlation():
    alpha = 0.125
    m = SeparableExponential(1.0, alpha, 1.0)
    w = SpaceTimeWindow.from_bounds((0, 1, 0, 1, 0, 1))
    g = SpaceTimeGrid(w, 32, 32, 1)
    lag = 4  # cells per alpha
    a, b = [], []
    for s in range(100):
        v = grf_simulate(m, g, seed=s).values[:, :, 0]
        a.append(v[:-lag].ravel())
        b.append(v[lag:].ravel())
    corr = np.corrcoef(np.concatenate(a), np.concatenate(b))[0, 1]
    assert abs(corr - math.exp(-1)) < 0.05


def test_seed_determinism():
    m = SeparableExponential(5.0, 0.1, 5.0)
    g = SpaceTimeGrid(W, 8, 8, 10)
    assert np.array_equal(grf_simulate(m, g, seed=3).values, grf_simulate(m, g, seed=3).values)
    assert not np.array_equal(grf_simulate(m, g, seed=3).values, grf_simulate(m, g, seed=4).values)
    gn = Gneiting(5.0, 0.05, 2.0, delta=1.8)
    gg = SpaceTimeGrid(W, 6, 6, 6)
    assert np.array_equal(grf_simulate(gn, gg, seed=1).values, grf_simulate(gn, gg, seed=1).values)


def test_gneiting_field_moments():
    gn = Gneiting(5.0, 0.1, 5.0, delta=1.0)
    g = SpaceTimeGrid(W, 5, 5, 5)
    draws = np.array([grf_simulate(gn, g, seed=s).values for s in range(200)])
    assert draws.var(ddof=1) == pytest.approx(5.0, rel=0.15)


def test_dense_cap_errors():
    with pytest.raises(ValueError, match="coarser grid"):
        grf_simulate(Gneiting(1.0, 0.1, 1.0), SpaceTimeGrid(W, 20, 20, 20))
    with pytest.raises(ValueError, match="coarser grid"):
        grf_simulate(SeparableExponential(1.0, 0.1, 1.0), SpaceTimeGrid(W, 100, 100, 2))


def test_local_empty_pattern_equals_global_draw():
    m = SeparableExponential(5.0, 0.1, 5.0)
    g = SpaceTimeGrid(W, 8, 8, 10)
    empty = PointPattern(np.empty((0, 3)), W)
    out = grf_local(m, local_result([]), empty, g, seed=9)
    assert np.array_equal(out.values, grf_simulate(m, g, seed=9).values)
    p = PointPattern([[0.5, 0.5, 25.0]], W)
    with pytest.raises(ValueError, match="aligned"):
        grf_local(m, local_result([]), p, g, seed=1)


def test_local_with_global_parameters_matches_global_moments():
    m = SeparableExponential(5.0, 0.1, 5.0)
    g = SpaceTimeGrid(W, 8, 8, 10)
    rng = np.random.default_rng(0)
    p = PointPattern(rng.random((60, 3)) * [1, 1, 50], W)
    fit = local_result([m] * p.n)
    loc = np.array([grf_local(m, fit, p, g, seed=s).values for s in range(100)])
    glob = np.array([grf_simulate(m, g, seed=1000 + s).values for s in range(100)])
    cell = (2, 5, 3)
    se_mean = math.sqrt(2 * 5.0 / 100)
    assert abs(loc[(slice(None), *cell)].mean() - glob[(slice(None), *cell)].mean()) < 3 * se_mean
    assert loc.var(ddof=1) == pytest.approx(glob.var(ddof=1), rel=0.15)


def test_local_high_variance_corner():
    base = SeparableExponential(2.0, 0.1, 5.0)
    g = SpaceTimeGrid(W, 8, 8, 10)
    rng = np.random.default_rng(1)
    p = PointPattern(rng.random((200, 3)) * [1, 1, 50], W)
    corner = (p.x < 0.5) & (p.y < 0.5)
    fit = local_result([SeparableExponential(12.0 if c else 2.0, 0.1, 5.0) for c in corner])
    draws = np.array([grf_local(base, fit, p, g, seed=s).values for s in range(100)])
    var = draws.var(axis=0, ddof=1)
    assert var[:4, :4].mean() > var[4:, 4:].mean()
