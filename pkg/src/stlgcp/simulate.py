"""Poisson and log-Gaussian Cox process simulation by thinning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .covariance import CovarianceModel
from .geometry import PointPattern, SpaceTimeWindow, window_volume
from .grf import GRFRealization, SpaceTimeGrid, grf_local, grf_simulate
from .seeding import derive_seed

CHUNK = 1 << 20


def _rng(seed, rng):
    return np.random.default_rng(seed) if rng is None else rng


def _dedupe(pts: np.ndarray, window: SpaceTimeWindow) -> np.ndarray:
    """Nudge exact duplicates by one ulp in x (towards the window interior)."""
    if len(pts) < 2:
        return pts
    while True:
        _, first, counts = np.unique(pts, axis=0, return_index=True, return_counts=True)
        if np.all(counts == 1):
            return pts
        seen = np.zeros(len(pts), dtype=bool)
        seen[first] = True
        dup = np.flatnonzero(~seen)
        mid = 0.5 * (window.x_range[0] + window.x_range[1])
        pts = pts.copy()
        pts[dup, 0] = np.nextafter(pts[dup, 0], mid)


def uniform_points(count: int, window: SpaceTimeWindow, rng: np.random.Generator) -> np.ndarray:
    lo, hi = window.lower, window.upper
    return lo + rng.random((count, 3)) * (hi - lo)


def poisson_homogeneous(rate: float, window: SpaceTimeWindow, seed=None,
                        rng: np.random.Generator | None = None) -> PointPattern:
    """Homogeneous Poisson process: ``N ~ Poisson(rate |W x T|)``, uniform locations."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    rng = _rng(seed, rng)
    count = rng.poisson(rate * window_volume(window))
    pts = _dedupe(uniform_points(count, window, rng), window)
    return PointPattern(pts, window)


def poisson_inhomogeneous(intensity: Callable[[np.ndarray], np.ndarray], lam_max: float,
                          window: SpaceTimeWindow, seed=None,
                          rng: np.random.Generator | None = None) -> PointPattern:
    """Inhomogeneous Poisson process by thinning a dominating process of rate ``lam_max``."""
    rng = _rng(seed, rng)
    dom = poisson_homogeneous(lam_max, window, rng=rng).points
    lam = np.asarray(intensity(dom), dtype=float)
    if np.any(lam > lam_max * (1 + 1e-12)):
        raise ValueError("intensity exceeds lam_max")
    keep = rng.random(len(dom)) <= lam / lam_max
    return PointPattern(dom[keep], window)


Baseline = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Inputs of one LGCP simulation.

    ``baseline`` is the first-order intensity: a constant, an array with the
    grid shape, or a callable evaluated at cell centres. With ``local_fit``
    (and the ``local_pattern`` it was fitted to) the driving field is the
    patchwork local GRF; ``field`` injects a precomputed realisation.
    """

    window: SpaceTimeWindow
    baseline: Baseline
    grid: SpaceTimeGrid
    model: Optional[CovarianceModel] = None
    local_fit: object = None
    local_pattern: Optional[PointPattern] = None
    seed: Optional[int] = None
    lookup: str = "nearest"
    subgrid: Optional[tuple[int, int, int]] = None
    field: Optional[GRFRealization] = None

    def __post_init__(self):
        if self.model is None and self.field is None:
            raise ValueError("need a covariance model or an explicit field")
        if self.local_fit is not None and self.local_pattern is None:
            raise ValueError("a local fit needs the pattern it was fitted to")
        if self.lookup not in ("nearest", "bilinear"):
            raise ValueError(f"unknown lookup {self.lookup!r}")


@dataclass(frozen=True, eq=False)
class SimulatedPattern:
    pattern: PointPattern
    field: GRFRealization
    lam_max: float
    n_dominating: int
    acceptance: Optional[np.ndarray] = None
    dominating: Optional[np.ndarray] = None
    accepted: Optional[np.ndarray] = None


def baseline_on_grid(baseline: Baseline, grid: SpaceTimeGrid) -> np.ndarray:
    if callable(baseline):
        vals = np.asarray(baseline(grid.centres()), dtype=float).reshape(grid.shape)
    else:
        vals = np.broadcast_to(np.asarray(baseline, dtype=float), grid.shape)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("baseline intensity must be finite and non-negative")
    return vals


def lgcp_simulate(cfg: SimulationConfig, keep_trace: bool = False) -> SimulatedPattern:
    """Simulate an LGCP by thinning.

    The field ``S`` is drawn on the grid, ``lambda0 = baseline * exp(S)``
    per cell and ``lam_max`` its maximum; a dominating Poisson process of
    rate ``lam_max`` is thinned with retention probability
    ``lambda0(cell) / lam_max``.
    """
    master = 0 if cfg.seed is None else int(cfg.seed)
    if cfg.field is not None:
        field = cfg.field
    elif cfg.local_fit is not None:
        field = grf_local(cfg.model, cfg.local_fit, cfg.local_pattern, cfg.grid, derive_seed(master, 0),
                          cfg.subgrid)
    else:
        field = grf_simulate(cfg.model, cfg.grid, derive_seed(master, 0))
    base = baseline_on_grid(cfg.baseline, field.grid)
    lam0 = base * np.exp(field.values)
    lam_max = float(lam0.max())
    rng = np.random.default_rng(derive_seed(master, 1))
    if lam_max <= 0:
        warnings.warn("maximum generating intensity is zero; returning an empty pattern", RuntimeWarning)
        return SimulatedPattern(PointPattern(np.empty((0, 3)), cfg.window), field, 0.0, 0)
    total = int(rng.poisson(lam_max * window_volume(cfg.window)))
    kept, trace = [], []
    # the dominating process is generated and thinned in chunks so memory stays bounded
    for start in range(0, total, CHUNK):
        dom = uniform_points(min(CHUNK, total - start), cfg.window, rng)
        ix, iy, it = field.grid.cell_index(dom)
        if cfg.lookup == "nearest":
            lam_at = lam0[ix, iy, it]
        else:
            lam_at = base[ix, iy, it] * np.exp(field.value_at(dom, "bilinear"))
        prob = lam_at / lam_max
        keep = rng.random(len(dom)) <= prob
        kept.append(dom[keep])
        if keep_trace:
            trace.append((prob, dom, keep))
    pts = _dedupe(np.vstack(kept) if kept else np.empty((0, 3)), cfg.window)
    pattern = PointPattern(pts, cfg.window)
    if keep_trace:
        if trace:
            prob, dom, keep = (np.concatenate(parts) for parts in zip(*trace))
        else:
            prob, dom, keep = np.empty(0), np.empty((0, 3)), np.empty(0, dtype=bool)
        return SimulatedPattern(pattern, field, lam_max, total, prob, dom, keep)
    return SimulatedPattern(pattern, field, lam_max, total)


def expected_rate(n_expected: float, window: SpaceTimeWindow) -> float:
    return n_expected / window_volume(window)
