import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import uniform_pattern
from stlgcp.contrast import ContrastSpec, contrast_value, fit_contrast, fit_global, fit_local
from stlgcp.covariance import Gneiting, SeparableExponential, pcf_theoretical
from stlgcp.kernels import BandwidthSet
from stlgcp.stats import LagGrid, SummaryStatistic, lista_weighted_all, pcf_local_all

GRID = LagGrid.default(uniform_pattern(2).window)


def theoretical(m, grid=GRID):
    rr, hh = grid.mesh()
    return SummaryStatistic(grid, pcf_theoretical(m, rr, hh), "global_pcf")


def test_zero_at_truth_and_non_negative():
    m = SeparableExponential(5.0, 0.05, 2.0)
    spec = ContrastSpec(GRID)
    assert contrast_value(spec, theoretical(m), m) == 0.0
    assert contrast_value(ContrastSpec(GRID, transform="log"), theoretical(m), m) == pytest.approx(0.0, abs=1e-24)


def test_csr_hand_oracle_on_two_by_two_grid():
    grid = LagGrid([0.05, 0.1], [2.0, 4.0])
    m = SeparableExponential(5.0, 0.05, 2.0)
    cells = [(1 - math.exp(5 * math.exp(-r / 0.05 - h / 2))) ** 2 for r in (0.05, 0.1) for h in (2.0, 4.0)]
    emp = SummaryStatistic(grid, np.ones((2, 2)), "global_pcf")
    assert contrast_value(ContrastSpec(grid), emp, m) == pytest.approx(sum(cells) / 4, rel=1e-12)


def test_weight_function_enters_the_mean():
    grid = LagGrid([0.05, 0.1], [2.0, 4.0])
    m = SeparableExponential(1.0, 0.05, 2.0)
    emp = SummaryStatistic(grid, np.ones((2, 2)), "global_pcf")
    base = contrast_value(ContrastSpec(grid), emp, m)
    doubled = contrast_value(ContrastSpec(grid, weight=lambda r, h: 2.0), emp, m)
    assert doubled == pytest.approx(2 * base)


@given(st.floats(0.05, 3.0))
def test_moving_sigma2_away_from_truth_increases_contrast(delta):
    m = SeparableExponential(5.0, 0.1, 5.0)
    spec = ContrastSpec(GRID)
    emp = theoretical(m)
    assert contrast_value(spec, emp, SeparableExponential(5.0 + delta, 0.1, 5.0)) > 0
    assert contrast_value(spec, emp, SeparableExponential(5.0 - delta, 0.1, 5.0)) > 0


def test_grid_mismatch_and_spec_errors():
    m = SeparableExponential(1.0, 0.1, 1.0)
    other = LagGrid.regular(1.0, 10.0, 15, 15)
    with pytest.raises(ValueError, match="different lag grid"):
        contrast_value(ContrastSpec(GRID), theoretical(m, other), m)
    with pytest.raises(ValueError):
        contrast_value(ContrastSpec(GRID), np.ones((3, 3)), m)
    with pytest.raises(ValueError):
        ContrastSpec(GRID, transform="sqrt")
    with pytest.raises(ValueError):
        ContrastSpec(GRID, family="matern")


@pytest.mark.parametrize("truth", [SeparableExponential(5.0, 0.1, 5.0), SeparableExponential(8.0, 0.05, 2.0),
                                   SeparableExponential(2.0, 0.2, 8.0)])
def test_noiseless_inversion_separable(truth):
    fit = fit_contrast(ContrastSpec(GRID), theoretical(truth))
    for name in ("sigma2", "alpha", "beta"):
        assert getattr(fit.params, name) == pytest.approx(getattr(truth, name), rel=1e-3)
    assert fit.contrast >= 0


def test_noiseless_inversion_gneiting():
    truth = Gneiting(5.0, 0.05, 2.0, delta=1.8)
    fit = fit_contrast(ContrastSpec(GRID, family="gneiting"), theoretical(truth))
    for name in ("sigma2", "alpha", "beta", "delta"):
        assert getattr(fit.params, name) == pytest.approx(getattr(truth, name), rel=1e-2)


def test_all_bad_starts_error():
    huge = SeparableExponential(1e4, 1.0, 100.0)
    with pytest.raises(ValueError, match="non-finite"):
        fit_contrast(ContrastSpec(GRID), theoretical(SeparableExponential(1, 0.1, 1)), starts=[huge])


@pytest.fixture(scope="module")
def clustered():
    from stlgcp.scenarios import STUDY_WINDOW, study_grid
    from stlgcp.simulate import SimulationConfig, lgcp_simulate
    m = SeparableExponential(5.0, 0.1, 5.0)
    p = lgcp_simulate(SimulationConfig(STUDY_WINDOW, 4.0, study_grid(m), m, seed=11)).pattern
    return p


def test_global_fit_permutation_invariant_and_deterministic(clustered):
    p = clustered
    lam = p.n / 50
    a = fit_global(p, lam)
    b = fit_global(p, lam)
    assert a.params == b.params and a.contrast == b.contrast
    order = np.random.default_rng(0).permutation(p.n)
    c = fit_global(p.permuted(order), lam)
    for name in ("sigma2", "alpha", "beta"):
        assert getattr(c.params, name) == pytest.approx(getattr(a.params, name), rel=1e-6)


def test_flat_weights_reproduce_global_fit(clustered):
    p = clustered.subset(np.arange(min(clustered.n, 120)))
    bw = BandwidthSet(0.05, 2.0)
    res = fit_local(p, p.n / 50, bw=bw)
    g = res.global_fit.params
    for name in ("sigma2", "alpha", "beta"):
        assert np.allclose(res.values(name), getattr(g, name), rtol=1e-4)


def test_local_fit_never_worse_than_global_params(clustered):
    p = clustered.subset(np.arange(min(clustered.n, 150)))
    lam = p.n / 50
    bw = BandwidthSet(0.05, 2.0, 0.3, 0.3, 15.0)
    spec = ContrastSpec(GRID)
    res = fit_local(p, lam, spec=spec, bw=bw)
    assert len(res) == p.n
    averaged = lista_weighted_all(pcf_local_all(p, lam, bw, GRID), p, bw)
    g = res.global_fit.params
    for i in np.flatnonzero(res.converged):
        own = contrast_value(spec, averaged[i], res.params[i])
        assert own == pytest.approx(res.contrast[i], rel=1e-9)
        assert own <= contrast_value(spec, averaged[i], g) * (1 + 1e-9)
    summary = res.summary()
    assert summary["sigma2"]["min"] <= summary["sigma2"]["median"] <= summary["sigma2"]["max"]
    again = fit_local(p, lam, spec=spec, bw=bw)
    assert [m for m in again.params] == [m for m in res.params]
