"""Monte-Carlo goodness-of-fit test based on inhomogeneous K-functions."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .contrast import GlobalFitResult, LocalFitResult
from .covariance import SeparableExponential
from .geometry import PointPattern
from .grf import SpaceTimeGrid
from .seeding import derive_seed
from .simulate import SimulationConfig, lgcp_simulate, poisson_homogeneous
from .stats import LagGrid, SummaryStatistic, k_inhom

VAR_FLOOR = 1e-12
MAX_RETRIES = 5

Intensity = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class DiagnosticResult:
    T_star: float
    T_q: np.ndarray
    p_value: float
    E_K: np.ndarray
    V_K: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    grid: LagGrid
    Q: int
    alpha_level: float
    cells_excluded: int
    seeds: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "T_star": float(self.T_star),
            "T_q": [float(v) for v in self.T_q],
            "p_value": float(self.p_value),
            "Q": int(self.Q),
            "alpha_level": float(self.alpha_level),
            "cells_excluded": int(self.cells_excluded),
        }


def test_statistic(k_hat, E_K, V_K, grid: LagGrid | None = None, var_floor: float = VAR_FLOOR) -> float:
    """Sum over lag cells of ``(K_hat - E_K) / sqrt(V_K)``, skipping cells with ``V_K < var_floor``."""
    k = k_hat.values if isinstance(k_hat, SummaryStatistic) else np.asarray(k_hat, dtype=float)
    e = np.asarray(E_K, dtype=float)
    v = np.asarray(V_K, dtype=float)
    if not (k.shape == e.shape == v.shape):
        raise ValueError("K, E_K and V_K must share one shape")
    if grid is not None and k.shape != grid.shape:
        raise ValueError("statistic does not match the lag grid")
    use = v >= var_floor
    if not np.any(use):
        raise ValueError("degenerate variance: every lag cell has V_K below the floor")
    return float(np.sum((k[use] - e[use]) / np.sqrt(v[use])))


test_statistic.__test__ = False  # keep pytest from collecting it


def p_value(t_star: float, t_q) -> float:
    t_q = np.asarray(t_q, dtype=float)
    return (1.0 + np.sum(t_q > t_star)) / (len(t_q) + 1.0)


def _intensity_fn(intensity: Intensity):
    if callable(intensity):
        return intensity
    lam = float(intensity)
    if not lam > 0:
        raise ValueError("intensity must be > 0")
    return lambda xyt: np.full(len(np.atleast_2d(xyt)), lam)


def _replicate_k(job) -> tuple[np.ndarray, int]:
    """Simulate one replicate and return its K-function, re-drawing patterns with n < 2."""
    (window, baseline, grid, sim_grid, model, local_fit, pattern, seed, q, subgrid, lookup) = job
    lam_fn = _intensity_fn(baseline)
    for attempt in range(MAX_RETRIES + 1):
        sub = derive_seed(seed, q) if attempt == 0 else derive_seed(seed, q, attempt)
        if model is None:
            rate = float(baseline) if not callable(baseline) else None
            if rate is None:
                raise ValueError("a Poisson null needs a constant intensity")
            sim = poisson_homogeneous(rate, window, seed=sub)
        else:
            cfg = SimulationConfig(window, baseline, sim_grid, model, local_fit,
                                   pattern if local_fit is not None else None, sub, lookup, subgrid)
            sim = lgcp_simulate(cfg).pattern
        if sim.n >= 2:
            return k_inhom(sim, lam_fn(sim.points), grid).values, sub
    raise RuntimeError(f"replicate {q} produced fewer than two points after {MAX_RETRIES} retries")


def default_sim_grid(p: PointPattern, model) -> SpaceTimeGrid:
    if model is None or isinstance(model, SeparableExponential):
        return SpaceTimeGrid(p.window, 32, 32, 50)
    return SpaceTimeGrid(p.window, 16, 16, 16)


def run_mc_test(p: PointPattern, intensity: Intensity, fitted: GlobalFitResult | LocalFitResult | None,
                Q: int = 39, grid: LagGrid | None = None, seed: int = 0, sim_grid: SpaceTimeGrid | None = None,
                subgrid=None, lookup: str = "nearest", n_jobs: int = 1) -> DiagnosticResult:
    """Simulate ``Q`` patterns from the fitted model and rank the data's K-function statistic among them.

    ``fitted=None`` tests against a Poisson process with the given
    intensity. A local fit simulates from the patchwork local GRF.
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if p.n < 2:
        raise ValueError("n < 2: the pattern needs at least two points")
    grid = LagGrid.default(p.window) if grid is None else grid
    local_fit = fitted if isinstance(fitted, LocalFitResult) else None
    if local_fit is not None:
        if local_fit.global_fit is None:
            raise ValueError("local fit carries no global fit for the background field")
        model = local_fit.global_fit.params
    else:
        model = None if fitted is None else fitted.params
    sim_grid = default_sim_grid(p, model) if sim_grid is None else sim_grid
    lam_fn = _intensity_fn(intensity)
    observed = k_inhom(p, lam_fn(p.points), grid).values
    jobs = [(p.window, intensity, grid, sim_grid, model, local_fit, p, int(seed), q, subgrid, lookup)
            for q in range(Q)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            out = list(ex.map(_replicate_k, jobs))
    else:
        out = [_replicate_k(j) for j in jobs]
    ks = np.stack([k for k, _ in out])
    e_k = ks.mean(axis=0)
    v_k = ks.var(axis=0, ddof=1) if Q > 1 else np.zeros_like(e_k)
    t_q = np.array([test_statistic(k, e_k, v_k) for k in ks])
    t_star = test_statistic(observed, e_k, v_k)
    excluded = int(np.sum(v_k < VAR_FLOOR))
    return DiagnosticResult(t_star, t_q, p_value(t_star, t_q), e_k, v_k, ks.min(axis=0), ks.max(axis=0),
                            observed, grid, Q, 2.0 / (Q + 1), excluded, tuple(s for _, s in out))
