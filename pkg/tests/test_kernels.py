import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from stlgcp.geometry import PointPattern, SpaceTimeWindow
from stlgcp.kernels import (KERNELS, BandwidthSet, Kernel1D, bandwidth_plugin, bandwidth_variable,
                            default_bandwidths, kernel_eval, product_weight)

import oracles
from conftest import uniform_pattern


def test_kernel_examples():
    assert kernel_eval(Kernel1D("epanechnikov", 2), 0) == 0.375
    assert kernel_eval(Kernel1D("epanechnikov", 2), 2.5) == 0
    assert kernel_eval(Kernel1D("box", 0.5), 0.4) == 1
    assert kernel_eval(Kernel1D("gaussian", 1), 0) == pytest.approx(1 / math.sqrt(2 * math.pi))


@pytest.mark.parametrize("name", KERNELS)
@pytest.mark.parametrize("b", [0.3, 1.0, 7.5])
def test_kernels_integrate_to_one(name, b):
    k = Kernel1D(name, b)
    lim = k.support
    total, _ = quad(lambda x: kernel_eval(k, x), -lim, lim, points=[-b, b] if name != "gaussian" else None,
                    limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_epanechnikov_support_exact():
    k = Kernel1D("epanechnikov", 1.5)
    assert kernel_eval(k, 1.5) == 0 and kernel_eval(k, -1.5) == 0 and kernel_eval(k, 1.4999) > 0


@given(st.sampled_from(KERNELS), st.floats(0.01, 10), st.floats(-30, 30))
def test_kernel_matches_oracle(name, b, x):
    assert kernel_eval(Kernel1D(name, b), x) == pytest.approx(oracles.KERNELS[name](x, b), rel=1e-12, abs=1e-300)


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel1D("triangle", 1)
    with pytest.raises(ValueError):
        Kernel1D("box", 0)
    with pytest.raises(ValueError):
        BandwidthSet(0.1, -1)


def test_product_weight_examples():
    bw = BandwidthSet(0.1, 1, 0.5, 0.25, 2.0)
    mode = oracles.gaussian(0, 0.5) * oracles.gaussian(0, 0.25) * oracles.gaussian(0, 2.0)
    assert product_weight(bw, 0, 0, 0) == pytest.approx(mode)
    assert product_weight(bw, 0, 0, 1e3) == pytest.approx(0.0, abs=1e-300)
    flat = BandwidthSet(0.1, 1, 1e6, 1e6, 1e6)
    assert product_weight(flat, 0.3, -0.8, 40) / product_weight(flat, 0, 0, 0) == pytest.approx(1.0, abs=1e-6)
    assert product_weight(BandwidthSet(0.1, 1), 5, 5, 5) == 1.0


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-30, 30))
def test_product_weight_sign_symmetric(dx, dy, dt):
    bw = BandwidthSet(0.1, 1, 0.7, 0.4, 6.0, weight_kernel="epanechnikov")
    w = product_weight(bw, dx, dy, dt)
    for sx in (1, -1):
        for sy in (1, -1):
            for stt in (1, -1):
                assert product_weight(bw, sx * dx, sy * dy, stt * dt) == w


def test_plugin_examples():
    assert bandwidth_plugin([0, 1, 2]) == pytest.approx(1.06 * min(1, 1 / 1.34) * 3 ** -0.2)
    assert bandwidth_plugin([0, 1, 2]) == pytest.approx(0.635, abs=1e-3)
    with pytest.raises(ValueError, match="degenerate sample"):
        bandwidth_plugin([2.0] * 10)


def test_plugin_standard_normal():
    vals = [bandwidth_plugin(np.random.default_rng(s).standard_normal(1000)) for s in range(40)]
    assert np.mean(vals) == pytest.approx(1.06 * 1000 ** -0.2, rel=0.15)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=40, unique=True), st.floats(0.01, 100))
def test_plugin_scale_equivariant(xs, c):
    if len(np.unique(xs)) < 3 or np.std(xs) < 1e-6:
        return
    assert bandwidth_plugin(np.array(xs) * c) == pytest.approx(c * bandwidth_plugin(xs), rel=1e-9)


def test_variable_bandwidth_examples():
    w = SpaceTimeWindow.from_bounds((0, 2, -1, 1, 0, 1))
    p = PointPattern([[0, 0, 0], [1, 0, 0], [2, 0, 0]], w)
    assert bandwidth_variable(p, 2, 0.1)[1] == 1.0
    assert bandwidth_variable(p, 2, 0.1)[0] == 2.0
    assert np.all(bandwidth_variable(p, 2, 5.0) == 5.0)
    with pytest.raises(ValueError):
        bandwidth_variable(p, 3, 0.1)


@given(st.integers(0, 1000), st.floats(-5, 5), st.floats(0.1, 10))
def test_variable_bandwidth_translation_scaling(seed, shift, scale):
    p = uniform_pattern(15, seed=seed)
    base = bandwidth_variable(p, 4, 1e-9)
    w = SpaceTimeWindow.from_bounds((shift, shift + scale, shift, shift + scale, 0, 50))
    moved = PointPattern(np.column_stack([p.xy * scale + shift, p.t]), w)
    assert np.allclose(bandwidth_variable(moved, 4, 1e-9), base * scale, rtol=1e-9, atol=1e-9)


def test_default_bandwidths_overrides():
    p = uniform_pattern(200)
    bw = default_bandwidths(p, eps_space=0.15, sigma_t=1140.31)
    assert bw.eps_space == 0.15 and bw.sigma_t == 1140.31
    assert bw.eps_time > 0 and bw.sigma_x == pytest.approx(np.std(p.x, ddof=1))
