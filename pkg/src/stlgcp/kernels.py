"""Smoothing kernels and bandwidth rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PointPattern, kth_nearest_all

KERNELS = ("epanechnikov", "gaussian", "box")
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Gaussian kernels are truncated here when pair searches need a finite support;
# the neglected mass is below 1e-17 of the peak.
GAUSSIAN_SUPPORT = 9.0


@dataclass(frozen=True)
class Kernel1D:
    name: str = "epanechnikov"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.name not in KERNELS:
            raise ValueError(f"unknown kernel {self.name!r}; choose from {KERNELS}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")

    @property
    def support(self) -> float:
        """Half-width beyond which the kernel is (treated as) zero."""
        if self.name == "gaussian":
            return GAUSSIAN_SUPPORT * self.bandwidth
        return self.bandwidth

    def __call__(self, x):
        return kernel_eval(self, x)


def kernel_eval(k: Kernel1D, x):
    """Density of the scaled kernel at ``x``."""
    x = np.asarray(x, dtype=float)
    b = k.bandwidth
    u = x / b
    if k.name == "epanechnikov":
        out = np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u) / b, 0.0)
    elif k.name == "gaussian":
        out = np.exp(-0.5 * u * u) / (_SQRT_2PI * b)
    else:
        out = np.where(np.abs(u) <= 1.0, 0.5 / b, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BandwidthSet:
    """Bandwidths for the pcf kernel (``eps_space``, ``eps_time``) and for local weighting.

    A local-weighting bandwidth of ``math.inf`` makes that axis flat.
    """

    eps_space: float
    eps_time: float
    sigma_x: float = math.inf
    sigma_y: float = math.inf
    sigma_t: float = math.inf
    pcf_kernel: str = "epanechnikov"
    weight_kernel: str = "gaussian"

    def __post_init__(self):
        for name in ("eps_space", "eps_time", "sigma_x", "sigma_y", "sigma_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("pcf_kernel", "weight_kernel"):
            if getattr(self, name) not in KERNELS:
                raise ValueError(f"unknown kernel {getattr(self, name)!r}")

    @property
    def space_kernel(self) -> Kernel1D:
        return Kernel1D(self.pcf_kernel, self.eps_space)

    @property
    def time_kernel(self) -> Kernel1D:
        return Kernel1D(self.pcf_kernel, self.eps_time)

    def flat(self) -> "BandwidthSet":
        """Same pcf bandwidths, flat local weights."""
        return BandwidthSet(self.eps_space, self.eps_time, pcf_kernel=self.pcf_kernel,
                            weight_kernel=self.weight_kernel)


def _axis_weight(name: str, b: float, d):
    if math.isinf(b):
        return np.ones_like(np.asarray(d, dtype=float))
    return np.asarray(kernel_eval(Kernel1D(name, b), d))


def product_weight(b: BandwidthSet, dx, dy, dt):
    """Separable local weight ``w(dx) w(dy) w(dt)``; infinite bandwidth axes contribute 1."""
    out = (_axis_weight(b.weight_kernel, b.sigma_x, dx)
           * _axis_weight(b.weight_kernel, b.sigma_y, dy)
           * _axis_weight(b.weight_kernel, b.sigma_t, dt))
    return out if out.ndim else float(out)


def bandwidth_plugin(samples) -> float:
    """Normal-scale plug-in bandwidth ``1.06 * min(sd, IQR / 1.34) * m ** (-1/5)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if len(np.unique(x)) < 2:
        raise ValueError("degenerate sample: all values identical")
    if len(np.unique(x)) < 3:
        raise ValueError("bandwidth_plugin needs at least 3 distinct samples")
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    iqr = (q75 - q25) / 1.34
    scale = min(sd, iqr) if iqr > 0 else sd
    return float(1.06 * scale * len(x) ** -0.2)


def bandwidth_variable(p: PointPattern, n_p: int, eps_floor: float) -> np.ndarray:
    """Per-point bandwidth ``max(eps_floor, distance to the n_p-th nearest other event)``."""
    if eps_floor <= 0:
        raise ValueError("eps_floor must be > 0")
    if n_p >= p.n:
        raise ValueError(f"n_p={n_p} must be smaller than the number of points ({p.n})")
    return np.maximum(eps_floor, kth_nearest_all(p, n_p))


def _pair_lags(p: PointPattern, max_pairs: int, seed: int = 0):
    n = p.n
    iu, ju = np.triu_indices(n, k=1) if n * (n - 1) // 2 <= max_pairs else (None, None)
    if iu is None:
        rng = np.random.default_rng(seed)
        iu = rng.integers(0, n, size=max_pairs)
        ju = rng.integers(0, n, size=max_pairs)
        keep = iu != ju
        iu, ju = iu[keep], ju[keep]
    d = np.hypot(p.x[iu] - p.x[ju], p.y[iu] - p.y[ju])
    return d, np.abs(p.t[iu] - p.t[ju])


def _coordinate_sd(v: np.ndarray) -> float:
    # a coordinate without spread cannot separate neighbours: weight that axis flat
    sd = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return sd if sd > 0 else math.inf


def default_bandwidths(p: PointPattern, *, eps_space=None, eps_time=None, sigma_x=None,
                       sigma_y=None, sigma_t=None, pcf_kernel="epanechnikov",
                       weight_kernel="gaussian", max_pairs: int = 600_000) -> BandwidthSet:
    """Fill unspecified bandwidths with plug-in values.

    pcf bandwidths are normal-scale plug-ins on the inter-point spatial
    distances and time lags (above ``max_pairs`` pairs, a fixed-seed random
    subsample). Local-weighting bandwidths are the sample standard deviations
    of the x, y and t coordinates: a plug-in there leaves only a handful of
    effective neighbours per point and the local contrasts become unstable.
    """
    if eps_space is None or eps_time is None:
        d, dt = _pair_lags(p, max_pairs)
        eps_space = bandwidth_plugin(d) if eps_space is None else eps_space
        eps_time = bandwidth_plugin(dt) if eps_time is None else eps_time
    sigma_x = _coordinate_sd(p.x) if sigma_x is None else sigma_x
    sigma_y = _coordinate_sd(p.y) if sigma_y is None else sigma_y
    sigma_t = _coordinate_sd(p.t) if sigma_t is None else sigma_t
    return BandwidthSet(eps_space, eps_time, sigma_x, sigma_y, sigma_t, pcf_kernel, weight_kernel)
