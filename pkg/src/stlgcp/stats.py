"""Global and local (LISTA) space-time pair correlation functions and the inhomogeneous K-function."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .geometry import PointPattern, SpaceTimeWindow, close_pairs, iter_close_pairs, resolve_correction, window_volume
from .kernels import BandwidthSet, kernel_eval, product_weight

KINDS = ("global_pcf", "local_pcf_stack", "weighted_avg_pcf", "k_inhom")


@dataclass(frozen=True, eq=False)
class LagGrid:
    """Evenly spaced positive spatial lags ``r_values`` and time lags ``h_values``."""

    r_values: np.ndarray
    h_values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_values, dtype=float)
        h = np.asarray(self.h_values, dtype=float)
        for name, v in (("r_values", r), ("h_values", h)):
            if v.ndim != 1 or len(v) == 0:
                raise ValueError(f"{name} must be a non-empty 1-d sequence")
            if np.any(np.diff(v) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            if len(v) > 2 and not np.allclose(np.diff(v), v[1] - v[0], rtol=1e-8, atol=0):
                raise ValueError(f"{name} must be evenly spaced")
        if r[0] <= 0:
            raise ValueError("spatial lags must be strictly positive (the pcf prefactor is singular at r = 0)")
        if h[0] < 0:
            raise ValueError("time lags must be non-negative")
        object.__setattr__(self, "r_values", r)
        object.__setattr__(self, "h_values", h)

    @classmethod
    def regular(cls, r_max: float, h_max: float, n_r: int = 15, n_h: int = 15) -> "LagGrid":
        """Lags ``r_max * k / n_r`` for k = 1..n_r (and likewise in time)."""
        return cls(r_max * np.arange(1, n_r + 1) / n_r, h_max * np.arange(1, n_h + 1) / n_h)

    @classmethod
    def default(cls, window: SpaceTimeWindow, n_r: int = 15, n_h: int = 15,
                fraction: float = 0.25) -> "LagGrid":
        """Grid up to ``fraction`` of the largest observable distance and time lag."""
        wx, wy, wt = window.widths
        return cls.regular(fraction * math.hypot(wx, wy), fraction * wt, n_r, n_h)

    @property
    def r_max(self) -> float:
        return float(self.r_values[-1])

    @property
    def h_max(self) -> float:
        return float(self.h_values[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.r_values), len(self.h_values)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r_values, self.h_values, indexing="ij")

    def same_as(self, other: "LagGrid") -> bool:
        return (self.shape == other.shape and np.array_equal(self.r_values, other.r_values)
                and np.array_equal(self.h_values, other.h_values))


@dataclass(frozen=True, eq=False)
class SummaryStatistic:
    """Values of a summary function on a lag grid.

    ``values`` has shape ``(n_r, n_h)``, or ``(n, n_r, n_h)`` for a local stack.
    """

    grid: LagGrid
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        if v.shape[-2:] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)


def intensity_at(intensity, p: PointPattern) -> np.ndarray:
    """Broadcast a scalar intensity or validate a per-point array."""
    lam = np.asarray(intensity, dtype=float)
    if lam.ndim == 0:
        lam = np.full(p.n, float(lam))
    if lam.shape != (p.n,):
        raise ValueError(f"intensity must be scalar or have one value per point ({p.n}), got {lam.shape}")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("intensities must be finite and > 0")
    return lam


def _pcf_pairs(p: PointPattern, bw: BandwidthSet, grid: LagGrid, correction):
    sk, tk = bw.space_kernel, bw.time_kernel
    r_cut = grid.r_max + sk.support
    h_cut = grid.h_max + tk.support
    i, j = close_pairs(p, r_cut * (1 + 1e-9), h_cut)
    dxy = p.xy[i] - p.xy[j]
    dt = p.t[i] - p.t[j]
    d = np.hypot(dxy[:, 0], dxy[:, 1])
    kr = kernel_eval(sk, d[:, None] - grid.r_values[None, :])
    kh = kernel_eval(tk, np.abs(dt)[:, None] - grid.h_values[None, :])
    live = (kr.any(axis=1)) & (kh.any(axis=1))
    i, j, kr, kh = i[live], j[live], kr[live], kh[live]
    corr = resolve_correction(correction)
    omega = np.asarray(corr(p.window, dxy[live, 0], dxy[live, 1], dt[live]), dtype=float)
    return i, j, kr, kh, omega


def pcf_local_all(p: PointPattern, intensity, bw: BandwidthSet, grid: LagGrid,
                  correction="translation") -> SummaryStatistic:
    """Local pair correlation function of every point (LISTA stack).

    For point ``i``::

        g_i(r, h) = n / (4 pi r |W x T|) * sum_{j != i} k_eps(||u_i - u_j|| - r) k_delta(|t_i - t_j| - h)
                    * omega_ij / (lambda_i lambda_j)

    with ``omega_ij`` the edge-correction weight. The stack averages to the
    usual global estimator and each layer is close to 1 under CSR.
    """
    n = p.n
    if n < 2:
        raise ValueError("n < 2: pair correlation needs at least two points")
    lam = intensity_at(intensity, p)
    i, j, kr, kh, omega = _pcf_pairs(p, bw, grid, correction)
    c = omega / (lam[i] * lam[j])
    n_r, n_h = grid.shape
    npairs = len(i)
    # incidence matrix: each unordered pair feeds both of its points
    inc = sparse.csr_matrix(
        (np.ones(2 * npairs), (np.concatenate([i, j]), np.tile(np.arange(npairs), 2))),
        shape=(n, npairs),
    )
    stack = np.empty((n, n_r, n_h))
    weighted_h = kh * c[:, None]
    for a in range(n_r):
        stack[:, a, :] = inc @ (weighted_h * kr[:, a:a + 1])
    scale = n / (4.0 * math.pi * grid.r_values * window_volume(p.window))
    stack *= scale[None, :, None]
    return SummaryStatistic(grid, stack, "local_pcf_stack")


def pcf_global(p: PointPattern, intensity, bw: BandwidthSet, grid: LagGrid,
               correction="translation", stack: SummaryStatistic | None = None) -> SummaryStatistic:
    """Global pcf as the mean of the local stack."""
    if stack is None:
        stack = pcf_local_all(p, intensity, bw, grid, correction)
    return SummaryStatistic(grid, stack.values.mean(axis=0), "global_pcf")


def local_weights(p: PointPattern, bw: BandwidthSet, target: int) -> np.ndarray:
    d = p.points - p.points[target]
    return np.asarray(product_weight(bw, d[:, 0], d[:, 1], d[:, 2]), dtype=float)


def lista_weighted_average(stack: SummaryStatistic, p: PointPattern, bw: BandwidthSet,
                           target: int) -> SummaryStatistic:
    """Kernel-weighted average of the local pcfs around point ``target`` (self included)."""
    values = stack.values
    if stack.kind != "local_pcf_stack" or values.shape[0] != p.n:
        raise ValueError("expected a local pcf stack with one layer per point")
    w = local_weights(p, bw, target)
    total = w.sum()
    if not total > 0:
        warnings.warn(f"all local weights vanish for point {target}; using its own pcf", RuntimeWarning)
        return SummaryStatistic(stack.grid, values[target].copy(), "weighted_avg_pcf")
    avg = np.tensordot(w, values, axes=(0, 0)) / total
    return SummaryStatistic(stack.grid, avg, "weighted_avg_pcf")


def lista_weighted_all(stack: SummaryStatistic, p: PointPattern, bw: BandwidthSet,
                       block: int = 512) -> np.ndarray:
    """Weighted averages for every target point, shape ``(n, n_r, n_h)``."""
    values = stack.values
    n = p.n
    if stack.kind != "local_pcf_stack" or values.shape[0] != n:
        raise ValueError("expected a local pcf stack with one layer per point")
    flat = values.reshape(n, -1)
    out = np.empty_like(flat)
    pts = p.points
    for start in range(0, n, block):
        stop = min(start + block, n)
        d = pts[start:stop, None, :] - pts[None, :, :]
        w = np.asarray(product_weight(bw, d[..., 0], d[..., 1], d[..., 2]), dtype=float)
        total = w.sum(axis=1)
        dead = ~(total > 0)
        if np.any(dead):
            rows = np.flatnonzero(dead) + start
            warnings.warn(f"all local weights vanish for points {rows.tolist()}; using their own pcf",
                          RuntimeWarning)
            w[dead] = 0.0
            w[dead, rows] = 1.0
            total[dead] = 1.0
        out[start:stop] = (w @ flat) / total[:, None]
    return out.reshape(values.shape)


def k_inhom(p: PointPattern, intensity, grid: LagGrid) -> SummaryStatistic:
    """Inhomogeneous space-time K-function::

        K(r, h) = |W||T| / (n (n - 1)) * sum_{i < j} 1(||u_i - u_j|| <= r, |t_i - t_j| <= h) / (lambda_i lambda_j)
    """
    n = p.n
    if n < 2:
        raise ValueError("n < 2: K-function needs at least two points")
    lam = intensity_at(intensity, p)
    n_r, n_h = grid.shape
    counts = np.zeros(n_r * n_h)
    for i, j in iter_close_pairs(p, grid.r_max * (1 + 1e-9) + 1e-300, grid.h_max):
        d = np.hypot(p.x[i] - p.x[j], p.y[i] - p.y[j])
        dt = np.abs(p.t[i] - p.t[j])
        ri = np.searchsorted(grid.r_values, d, side="left")
        hi = np.searchsorted(grid.h_values, dt, side="left")
        keep = (ri < n_r) & (hi < n_h)
        w = 1.0 / (lam[i[keep]] * lam[j[keep]])
        counts += np.bincount(ri[keep] * n_h + hi[keep], weights=w, minlength=n_r * n_h)
    counts = counts.reshape(n_r, n_h)
    k = np.cumsum(np.cumsum(counts.astype(float), axis=0), axis=1)
    k *= window_volume(p.window) / (n * (n - 1))
    return SummaryStatistic(grid, k, "k_inhom")
