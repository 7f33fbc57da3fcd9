"""Gaussian random fields on regular space-time grids, global and patchwork-local."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import cdist

from .covariance import CovarianceModel, Gneiting, SeparableExponential, cov_eval
from .geometry import PointPattern, SpaceTimeWindow
from .seeding import derive_seed

DENSE_CAP = 4096
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """``nx x ny x nt`` cells tiling ``window``; values live at cell centres."""

    window: SpaceTimeWindow
    nx: int
    ny: int
    nt: int

    def __post_init__(self):
        if min(self.nx, self.ny, self.nt) < 1:
            raise ValueError("grid needs at least one cell per axis")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.nx, self.ny, self.nt

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nt

    @property
    def spacing(self) -> tuple[float, float, float]:
        wx, wy, wt = self.window.widths
        return wx / self.nx, wy / self.ny, wt / self.nt

    @property
    def cell_volume(self) -> float:
        dx, dy, dt = self.spacing
        return dx * dy * dt

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = self.window
        return tuple(lo + (np.arange(k) + 0.5) * (hi - lo) / k
                     for (lo, hi), k in zip((w.x_range, w.y_range, w.t_range), self.shape))

    def spatial_centres(self) -> np.ndarray:
        cx, cy, _ = self.axes()
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def centres(self) -> np.ndarray:
        gx, gy, gt = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), gt.ravel()])

    def cell_index(self, xyt) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer cell indices (nearest cell) of each location."""
        xyt = np.atleast_2d(np.asarray(xyt, dtype=float))
        rel = (xyt - self.window.lower) / np.array(self.window.widths)
        idx = np.floor(rel * np.array(self.shape)).astype(np.intp)
        idx = np.clip(idx, 0, np.array(self.shape) - 1)
        return idx[:, 0], idx[:, 1], idx[:, 2]


@dataclass(frozen=True, eq=False)
class GRFRealization:
    grid: SpaceTimeGrid
    values: np.ndarray
    params: CovarianceModel
    seed: int | None

    @property
    def mean(self) -> float:
        return -0.5 * self.params.sigma2

    def value_at(self, xyt, lookup: str = "nearest") -> np.ndarray:
        """Field value at arbitrary locations by nearest-cell or bilinear-in-space lookup."""
        ix, iy, it = self.grid.cell_index(xyt)
        if lookup == "nearest":
            return self.values[ix, iy, it]
        if lookup != "bilinear":
            raise ValueError(f"unknown lookup {lookup!r}")
        xyt = np.atleast_2d(np.asarray(xyt, dtype=float))
        dx, dy, _ = self.grid.spacing
        fx = (xyt[:, 0] - self.grid.window.x_range[0]) / dx - 0.5
        fy = (xyt[:, 1] - self.grid.window.y_range[0]) / dy - 0.5
        x0, wx = _bracket(fx, self.grid.nx)
        y0, wy = _bracket(fy, self.grid.ny)
        x1 = np.minimum(x0 + 1, self.grid.nx - 1)
        y1 = np.minimum(y0 + 1, self.grid.ny - 1)
        v = self.values
        return ((1 - wx) * (1 - wy) * v[x0, y0, it] + wx * (1 - wy) * v[x1, y0, it]
                + (1 - wx) * wy * v[x0, y1, it] + wx * wy * v[x1, y1, it])


def _bracket(f, n):
    if n == 1:
        return np.zeros(len(f), dtype=np.intp), np.zeros(len(f))
    i0 = np.clip(np.floor(f).astype(np.intp), 0, n - 2)
    return i0, np.clip(f - i0, 0.0, 1.0)


def cholesky_jittered(c: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding diagonal jitter 1e-10 .. 1e-6 (relative) only if needed."""
    scale = float(np.max(np.diag(c))) if c.size else 1.0
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(c + jitter * scale * np.eye(len(c)) if jitter else c)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("covariance matrix is not positive definite even with jitter 1e-6")


@lru_cache(maxsize=32)
def _spatial_factor(alpha: float, nx: int, ny: int, bounds: tuple) -> np.ndarray:
    grid = SpaceTimeGrid(SpaceTimeWindow.from_bounds(bounds), nx, ny, 1)
    xy = grid.spatial_centres()
    return cholesky_jittered(np.exp(-cdist(xy, xy) / alpha))


@lru_cache(maxsize=32)
def _temporal_factor(beta: float, nt: int, bounds: tuple) -> np.ndarray:
    grid = SpaceTimeGrid(SpaceTimeWindow.from_bounds(bounds), 1, 1, nt)
    t = grid.axes()[2]
    return cholesky_jittered(np.exp(-np.abs(t[:, None] - t[None, :]) / beta))


def dense_covariance(m: CovarianceModel, xyt: np.ndarray) -> np.ndarray:
    r = cdist(xyt[:, :2], xyt[:, :2])
    h = np.abs(xyt[:, 2][:, None] - xyt[:, 2][None, :])
    return np.asarray(cov_eval(m, r, h))


@lru_cache(maxsize=8)
def _dense_factor(m: CovarianceModel, shape: tuple, bounds: tuple) -> np.ndarray:
    grid = SpaceTimeGrid(SpaceTimeWindow.from_bounds(bounds), *shape)
    return cholesky_jittered(dense_covariance(m, grid.centres()))


def separable_factors(m: SeparableExponential, grid: SpaceTimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky factors of the spatial and temporal correlation matrices (cached)."""
    b = grid.window.bounds()
    return _spatial_factor(m.alpha, grid.nx, grid.ny, b), _temporal_factor(m.beta, grid.nt, b)


def grf_simulate(m: CovarianceModel, grid: SpaceTimeGrid, seed=None, dense_cap: int = DENSE_CAP,
                 rng: np.random.Generator | None = None) -> GRFRealization:
    """Draw a GRF with mean ``-sigma2 / 2`` and covariance ``m`` on the cell centres of ``grid``.

    The separable family uses the Kronecker structure: ``S = mu + sigma * Ls Z Lt^T``
    with ``Z`` standard normal; the Gneiting family a dense Cholesky factor.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    mu = -0.5 * m.sigma2
    if isinstance(m, SeparableExponential):
        ns = grid.nx * grid.ny
        if ns > dense_cap or grid.nt > dense_cap:
            raise ValueError(f"spatial block of {ns} cells exceeds the dense cap {dense_cap}; use a coarser grid")
        ls, lt = separable_factors(m, grid)
        z = rng.standard_normal((ns, grid.nt))
        field = mu + math.sqrt(m.sigma2) * (ls @ z @ lt.T)
    elif isinstance(m, Gneiting):
        if grid.size > dense_cap:
            raise ValueError(f"grid of {grid.size} cells exceeds the dense cap {dense_cap}; use a coarser grid")
        chol = _dense_factor(m, grid.shape, grid.window.bounds())
        field = mu + chol @ rng.standard_normal(grid.size)
    else:
        raise TypeError(f"unsupported covariance model {type(m).__name__}")
    return GRFRealization(grid, field.reshape(grid.shape), m, seed)


def default_subgrid(grid: SpaceTimeGrid) -> tuple[int, int, int]:
    """Sub-grid of roughly 4 x 4 x 5 fine cells per block."""
    return max(1, grid.nx // 4), max(1, grid.ny // 4), max(1, grid.nt // 5)


def _block_ids(grid: SpaceTimeGrid, subgrid, ix, iy, it):
    bx, by, bt = subgrid
    return ((ix * bx // grid.nx) * by + iy * by // grid.ny) * bt + it * bt // grid.nt


def grf_local(global_params: CovarianceModel, local_fit, p: PointPattern, grid: SpaceTimeGrid, seed=None,
              subgrid: tuple[int, int, int] | None = None) -> GRFRealization:
    """Patchwork GRF carrying the per-point estimates of a local fit.

    1. draw a global field with ``global_params``;
    2. for every data point, draw a field with its own parameters on the
       cells of the sub-grid block that contains it;
    3. average those draws per block;
    4. blocks without data keep the global values.

    The draws of step 2 inside a block share one standard-normal vector,
    so points with equal parameters reproduce a single draw (the average
    keeps the marginal variance instead of shrinking it by the point count).
    """
    if len(local_fit) != p.n:
        raise ValueError("local fit is not aligned with the point pattern")
    base = grf_simulate(global_params, grid, seed)
    values = base.values.copy()
    if p.n == 0:
        return GRFRealization(grid, values, global_params, seed)
    subgrid = default_subgrid(grid) if subgrid is None else tuple(int(s) for s in subgrid)
    gix, giy, git = np.meshgrid(*(np.arange(k) for k in grid.shape), indexing="ij")
    cell_block = _block_ids(grid, subgrid, gix, giy, git)
    centres = grid.centres().reshape(*grid.shape, 3)
    pix, piy, pit = grid.cell_index(p.points)
    point_block = _block_ids(grid, subgrid, pix, piy, pit)
    master = 0 if seed is None else int(seed)
    for block in np.unique(point_block):
        cells = np.nonzero(cell_block == block)
        if len(cells[0]) > DENSE_CAP:
            raise ValueError("sub-grid block exceeds the dense cap; use a finer sub-grid")
        xyt = centres[cells]
        z = np.random.default_rng(derive_seed(master, 1, int(block))).standard_normal(len(xyt))
        members = np.flatnonzero(point_block == block)
        acc = np.zeros(len(xyt))
        for i in members:
            m = local_fit.params[i]
            acc += -0.5 * m.sigma2 + cholesky_jittered(dense_covariance(m, xyt)) @ z
        values[cells] = acc / len(members)
    return GRFRealization(grid, values, global_params, seed)
