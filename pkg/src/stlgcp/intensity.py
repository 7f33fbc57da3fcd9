"""First-order intensity: quadrature schemes, weighted Poisson regression and local fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .geometry import PointPattern, SpaceTimeWindow, window_volume
from .kernels import BandwidthSet, product_weight

CovariateFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Data points followed by dummy points, with counting weights ``a_k = nu / n_k``."""

    points: np.ndarray
    weights: np.ndarray
    is_data: np.ndarray
    window: SpaceTimeWindow
    cube_counts: tuple[int, int, int]
    covariates: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    covariate_fn: Optional[CovariateFn] = None
    offset_fn: Optional[CovariateFn] = None
    covariate_names: tuple[str, ...] = ()

    @property
    def n_data(self) -> int:
        return int(self.is_data.sum())

    @property
    def n_dummy(self) -> int:
        return len(self.weights) - self.n_data

    @property
    def responses(self) -> np.ndarray:
        return self.is_data / self.weights

    def design(self) -> np.ndarray:
        ones = np.ones((len(self.weights), 1))
        if self.covariates is None:
            return ones
        return np.hstack([ones, self.covariates])

    @property
    def column_names(self) -> tuple[str, ...]:
        return ("intercept", *self.covariate_names)

    def offset_values(self) -> np.ndarray:
        return np.zeros(len(self.weights)) if self.offset is None else self.offset


def _cell_index(xyt: np.ndarray, window: SpaceTimeWindow, counts) -> np.ndarray:
    lower, widths = window.lower, np.array(window.widths)
    idx = np.floor((xyt - lower) / widths * np.asarray(counts)).astype(np.intp)
    idx = np.clip(idx, 0, np.asarray(counts) - 1)
    nx, ny, nt = counts
    return (idx[:, 0] * ny + idx[:, 1]) * nt + idx[:, 2]


def _lattice_centres(window: SpaceTimeWindow, counts) -> np.ndarray:
    axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k
            for (lo, hi), k in zip((window.x_range, window.y_range, window.t_range), counts)]
    gx, gy, gt = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gt.ravel()])


def _eval_columns(fn, pts):
    vals = np.asarray(fn(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != len(pts) or not np.all(np.isfinite(vals)):
        raise ValueError("covariate function must return finite values, one row per point")
    return vals


def build_quadrature(p: PointPattern, target_dummy: int | None = None,
                     cube_counts: tuple[int, int, int] | None = None,
                     covariates: CovariateFn | None = None, offset: CovariateFn | None = None,
                     covariate_names=None, max_data_per_cube: int = 8) -> QuadratureScheme:
    """Berman-Turner quadrature with one dummy point at the centre of each lattice cube.

    Every point in cube ``C_k`` receives weight ``nu / n_k``. Without explicit
    ``cube_counts`` the lattice is refined until it has at least
    ``target_dummy`` (default ``4 n``) cubes and no cube holds more than
    ``max_data_per_cube`` data points.
    """
    n = p.n
    if cube_counts is None:
        target = max(4 * n if target_dummy is None else int(target_dummy), n + 1, 8)
        k = max(2, math.ceil(target ** (1.0 / 3.0) - 1e-9))
        while True:
            counts = (k, k, k)
            if n == 0:
                break
            occupancy = np.bincount(_cell_index(p.points, p.window, counts), minlength=k ** 3)
            if k ** 3 >= target and occupancy.max() <= max_data_per_cube:
                break
            k += 1
    else:
        counts = tuple(int(c) for c in cube_counts)
        if len(counts) != 3 or min(counts) < 1:
            raise ValueError("cube_counts must be three positive integers")
    dummies = _lattice_centres(p.window, counts)
    m = len(dummies)
    if m <= n:
        raise ValueError(f"quadrature needs more dummy points ({m}) than data points ({n})")
    pts = np.vstack([p.points, dummies])
    cells = _cell_index(pts, p.window, counts)
    occupancy = np.bincount(cells, minlength=m)
    nu = window_volume(p.window) / m
    weights = nu / occupancy[cells]
    is_data = np.zeros(len(pts))
    is_data[:n] = 1.0
    z = None
    names: tuple[str, ...] = ()
    if covariates is not None:
        z = _eval_columns(covariates, pts)
        names = tuple(covariate_names) if covariate_names else tuple(f"z{c + 1}" for c in range(z.shape[1]))
        if len(names) != z.shape[1]:
            raise ValueError("covariate_names does not match the number of covariate columns")
    b = None
    if offset is not None:
        b = _eval_columns(offset, pts)[:, 0]
    return QuadratureScheme(pts, weights, is_data, p.window, counts, z, b, covariates, offset, names)


@dataclass(frozen=True, eq=False)
class IntensityFit:
    theta: np.ndarray
    log_intensity: np.ndarray
    iterations: int
    deviance_change: float
    converged: bool
    deviance_trace: tuple[float, ...] = ()
    column_names: tuple[str, ...] = ("intercept",)
    covariate_fn: Optional[CovariateFn] = field(default=None, repr=False)
    offset_fn: Optional[CovariateFn] = field(default=None, repr=False)

    def intensity(self, xyt) -> np.ndarray:
        """Fitted intensity at arbitrary locations."""
        xyt = np.atleast_2d(np.asarray(xyt, dtype=float))
        eta = np.full(len(xyt), self.theta[0])
        if len(self.theta) > 1:
            if self.covariate_fn is None:
                raise ValueError("fit has covariates but no covariate function to evaluate them")
            eta = eta + _eval_columns(self.covariate_fn, xyt) @ self.theta[1:]
        if self.offset_fn is not None:
            eta = eta + _eval_columns(self.offset_fn, xyt)[:, 0]
        return np.exp(eta)

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "columns": list(self.column_names),
            "iterations": self.iterations,
            "deviance_change": float(self.deviance_change),
            "converged": bool(self.converged),
        }


def poisson_loglik_approx(q: QuadratureScheme, theta, extra_weights=None) -> float:
    """Quadrature approximation ``sum_j a_j (y_j log lambda_j - lambda_j) + sum_j a_j``."""
    theta = np.asarray(theta, dtype=float)
    x = q.design()
    if theta.shape != (x.shape[1],):
        raise ValueError(f"theta must have {x.shape[1]} entries")
    a = q.weights if extra_weights is None else q.weights * np.asarray(extra_weights, dtype=float)
    eta = x @ theta + q.offset_values()
    with np.errstate(over="ignore"):
        lam = np.exp(eta)
    if not np.all(np.isfinite(lam)):
        raise ValueError("non-finite intensity at a quadrature point")
    y = q.responses
    return float(np.sum(a * (y * eta - lam)) + np.sum(a))


def _deviance(y, mu, w):
    ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
    return float(2.0 * np.sum(w * (ylogy - (y - mu))))


def _check_rank(x: np.ndarray, names) -> None:
    rank = np.linalg.matrix_rank(x)
    if rank < x.shape[1]:
        _, _, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
        bad = [names[c] for c in piv[rank:]]
        raise ValueError(f"design matrix is rank deficient; collinear columns: {bad}")


def fit_poisson(q: QuadratureScheme, extra_weights=None, max_iter: int = 50,
                tol: float = 1e-8) -> IntensityFit:
    """Weighted Poisson regression with log link by iteratively reweighted least squares.

    Maximises the quadrature log-likelihood, with the quadrature weights
    multiplied by ``extra_weights`` when given (local likelihood).
    """
    x = q.design()
    b = q.offset_values()
    y = q.responses
    w = q.weights.copy()
    if extra_weights is not None:
        extra = np.asarray(extra_weights, dtype=float)
        if extra.shape != w.shape or np.any(extra < 0) or not np.all(np.isfinite(extra)):
            raise ValueError("extra_weights must be finite, non-negative, one per quadrature point")
        w = w * extra
    data_mass = float(np.sum(w * q.is_data))
    if not data_mass > 0:
        raise ValueError("no effective data: zero weighted data mass")
    support = w > 0
    _check_rank(x[support] * np.sqrt(w[support])[:, None], q.column_names)
    x, b, y, w = x[support], b[support], y[support], w[support]

    beta = np.zeros(x.shape[1])
    beta[0] = math.log(data_mass / float(np.sum(w * np.exp(b))))
    eta = x @ beta + b
    mu = np.exp(eta)
    dev = _deviance(y, mu, w)
    trace = [dev]
    converged = False
    change = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        z = eta - b + (y - mu) / mu
        sw = np.sqrt(w * mu)
        step, *_ = np.linalg.lstsq(x * sw[:, None], z * sw, rcond=None)
        new_beta = step
        for _ in range(40):
            new_eta = x @ new_beta + b
            with np.errstate(over="ignore"):
                new_mu = np.exp(new_eta)
            new_dev = _deviance(y, new_mu, w) if np.all(np.isfinite(new_mu)) else math.inf
            if new_dev <= dev * (1 + 1e-12) + 1e-12:
                break
            new_beta = 0.5 * (new_beta + beta)
        else:
            break
        change = abs(dev - new_dev) / (abs(new_dev) + 0.1)
        beta, eta, mu = new_beta, new_eta, new_mu
        dev = min(dev, new_dev)
        trace.append(new_dev)
        if change < tol:
            converged = True
            break
    return IntensityFit(beta, q.design() @ beta + q.offset_values(), it, change, converged, tuple(trace),
                        q.column_names, q.covariate_fn, q.offset_fn)


@dataclass(frozen=True, eq=False)
class LocalIntensityField:
    locations: np.ndarray
    theta: np.ndarray
    intensity: np.ndarray
    converged: np.ndarray
    bandwidths: BandwidthSet
    column_names: tuple[str, ...] = ("intercept",)


def grid_centres(window: SpaceTimeWindow, shape=(10, 10, 5)) -> np.ndarray:
    return _lattice_centres(window, shape)


def fit_local_intensity(q: QuadratureScheme, p: PointPattern, bw: BandwidthSet,
                        eval_grid=(10, 10, 5)) -> LocalIntensityField:
    """Local likelihood fit at each evaluation location.

    ``eval_grid`` is either a lattice shape ``(nx, ny, nt)`` of cell centres
    or an explicit ``(G, 3)`` array of locations. Failing locations are
    flagged with NaN coefficients rather than aborting the whole field.
    """
    grid = np.asarray(eval_grid)
    locs = grid_centres(p.window, tuple(int(g) for g in grid)) if grid.ndim == 1 else grid.astype(float)
    if len(locs) == 0:
        raise ValueError("evaluation grid is empty")
    k = q.design().shape[1]
    thetas = np.full((len(locs), k), np.nan)
    lam = np.full(len(locs), np.nan)
    ok = np.zeros(len(locs), dtype=bool)
    zloc = _eval_columns(q.covariate_fn, locs) if q.covariate_fn is not None else np.empty((len(locs), 0))
    bloc = _eval_columns(q.offset_fn, locs)[:, 0] if q.offset_fn is not None else np.zeros(len(locs))
    for g, v in enumerate(locs):
        d = q.points - v
        extra = np.asarray(product_weight(bw, d[:, 0], d[:, 1], d[:, 2]), dtype=float)
        try:
            fit = fit_poisson(q, extra_weights=extra)
        except (ValueError, np.linalg.LinAlgError):
            continue
        thetas[g] = fit.theta
        lam[g] = math.exp(fit.theta[0] + zloc[g] @ fit.theta[1:] + bloc[g])
        ok[g] = fit.converged
    return LocalIntensityField(locs, thetas, lam, ok, bw, q.column_names)


def kernel_intensity(p: PointPattern, bw: BandwidthSet, locations) -> np.ndarray:
    """Edge-corrected Gaussian kernel estimate of the intensity at ``locations``."""
    if bw.weight_kernel != "gaussian" or not np.all(np.isfinite([bw.sigma_x, bw.sigma_y, bw.sigma_t])):
        raise ValueError("kernel_intensity needs finite Gaussian weighting bandwidths")
    locs = np.atleast_2d(np.asarray(locations, dtype=float))
    sig = np.array([bw.sigma_x, bw.sigma_y, bw.sigma_t])
    lo, hi = p.window.lower, p.window.upper
    out = np.empty(len(locs))
    for g, v in enumerate(locs):
        d = p.points - v
        num = np.sum(product_weight(bw, d[:, 0], d[:, 1], d[:, 2]))
        mass = np.prod(ndtr((hi - v) / sig) - ndtr((lo - v) / sig))
        out[g] = num / mass
    return out
