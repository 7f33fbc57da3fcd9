"""Space-time windows, point patterns, distances and edge corrections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class SpaceTimeWindow:
    """Closed box ``W x T = [x0, x1] x [y0, y1] x [t0, t1]``."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    t_range: tuple[float, float]

    def __post_init__(self):
        for name in ("x_range", "y_range", "t_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ValueError(f"{name} must be a finite interval of positive length, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))

    @classmethod
    def from_bounds(cls, bounds) -> "SpaceTimeWindow":
        x0, x1, y0, y1, t0, t1 = (float(b) for b in bounds)
        return cls((x0, x1), (y0, y1), (t0, t1))

    @classmethod
    def unit(cls, t_length: float = 1.0) -> "SpaceTimeWindow":
        return cls((0.0, 1.0), (0.0, 1.0), (0.0, float(t_length)))

    @property
    def widths(self) -> tuple[float, float, float]:
        return (
            self.x_range[1] - self.x_range[0],
            self.y_range[1] - self.y_range[0],
            self.t_range[1] - self.t_range[0],
        )

    @property
    def area(self) -> float:
        wx, wy, _ = self.widths
        return wx * wy

    @property
    def duration(self) -> float:
        return self.widths[2]

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.t_range[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.t_range[1]])

    def contains(self, xyt) -> np.ndarray:
        xyt = np.atleast_2d(np.asarray(xyt, dtype=float))
        return np.all((xyt >= self.lower) & (xyt <= self.upper), axis=1)

    def bounds(self) -> tuple[float, ...]:
        return (*self.x_range, *self.y_range, *self.t_range)


def window_volume(w: SpaceTimeWindow) -> float:
    """|W| * |T|."""
    wx, wy, wt = w.widths
    return wx * wy * wt


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Distinct events ``(x, y, t)`` observed inside a window.

    ``points`` is stored as a read-only ``(n, 3)`` float array.
    """

    points: np.ndarray
    window: SpaceTimeWindow

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = np.empty((0, 3))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        inside = self.window.contains(pts) if len(pts) else np.array([], dtype=bool)
        if not np.all(inside):
            bad = np.flatnonzero(~inside)
            raise ValueError(f"points outside window at rows {bad[:20].tolist()}")
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("pattern contains duplicated points")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def t(self) -> np.ndarray:
        return self.points[:, 2]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    def subset(self, mask) -> "PointPattern":
        return PointPattern(self.points[np.asarray(mask)], self.window)

    def permuted(self, order) -> "PointPattern":
        return PointPattern(self.points[np.asarray(order)], self.window)


@dataclass(frozen=True)
class CylindricalNeighborhood:
    """Cylinder of radius ``r`` and half-height ``h`` around ``center``."""

    center: tuple[float, float, float]
    radius: float
    half_height: float = field(default=0.0)

    def __post_init__(self):
        if self.radius < 0 or self.half_height < 0:
            raise ValueError("radius and half-height must be non-negative")

    def contains(self, xyt) -> np.ndarray:
        xyt = np.atleast_2d(np.asarray(xyt, dtype=float))
        cx, cy, ct = self.center
        d = np.hypot(xyt[:, 0] - cx, xyt[:, 1] - cy)
        return (d <= self.radius) & (np.abs(xyt[:, 2] - ct) <= self.half_height)


def pairwise_distances(p: PointPattern) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(spatial, temporal)`` n x n matrices of Euclidean distance and |time lag|."""
    if p.n == 0:
        return np.empty((0, 0)), np.empty((0, 0))
    diff = p.xy[:, None, :] - p.xy[None, :, :]
    spatial = np.sqrt(np.sum(diff**2, axis=-1))
    temporal = np.abs(p.t[:, None] - p.t[None, :])
    return spatial, temporal


def translation_weights(window: SpaceTimeWindow, dx, dy, dt) -> np.ndarray:
    """Vectorised translation-correction weight ``|W|/|W ∩ W_d| * |T|/|T ∩ T_d|``."""
    wx, wy, wt = window.widths
    ax, ay, at = np.abs(dx), np.abs(dy), np.abs(dt)
    if np.any(ax >= wx) or np.any(ay >= wy) or np.any(at >= wt):
        raise ValueError("displacement exceeds window extent; pair cannot co-occur in W x T")
    return (wx * wy) / ((wx - ax) * (wy - ay)) * wt / (wt - at)


def translation_correction(p: PointPattern, i: int, j: int) -> float:
    """Translation edge-correction weight for the pair ``(i, j)``."""
    if i == j:
        raise ValueError("translation correction needs two distinct points")
    d = p.points[i] - p.points[j]
    return float(translation_weights(p.window, d[0], d[1], d[2]))


def no_correction(window: SpaceTimeWindow, dx, dy, dt) -> np.ndarray:
    return np.ones(np.broadcast(dx, dy, dt).shape)


EDGE_CORRECTIONS = {"translation": translation_weights, "none": no_correction}


def resolve_correction(correction):
    if callable(correction):
        return correction
    try:
        return EDGE_CORRECTIONS[correction]
    except KeyError:
        raise ValueError(f"unknown edge correction {correction!r}; choose from {sorted(EDGE_CORRECTIONS)}") from None


def kth_nearest_distance(p: PointPattern, i: int, k: int, spatial_only: bool = True,
                         time_scale: float = 1.0) -> float:
    """Distance from point ``i`` to its ``k``-th nearest other point.

    With ``spatial_only=False`` the cylindrical metric
    ``max(||u_i - u_j||, |t_i - t_j| / time_scale)`` is used, i.e. the
    radius of the smallest cylinder of aspect ``time_scale`` that holds
    ``k`` other events.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k > p.n - 1:
        raise ValueError(f"insufficient neighbors: k={k} but only {p.n - 1} other points")
    d = np.hypot(p.x - p.x[i], p.y - p.y[i])
    if not spatial_only:
        d = np.maximum(d, np.abs(p.t - p.t[i]) / time_scale)
    d = np.delete(d, i)
    return float(np.partition(d, k - 1)[k - 1])


def kth_nearest_all(p: PointPattern, k: int) -> np.ndarray:
    """Spatial distance from every point to its ``k``-th nearest other point."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k > p.n - 1:
        raise ValueError(f"insufficient neighbors: k={k} but only {p.n - 1} other points")
    dist, _ = cKDTree(p.xy).query(p.xy, k=k + 1)
    # column 0 is the point itself, except with coincident spatial locations where
    # the ordering among zero distances is arbitrary but the values agree
    return np.asarray(dist)[:, k]


def iter_close_pairs(p: PointPattern, r_max: float, h_max: float, max_block: int = 2_000_000):
    """Yield chunks ``(i, j)`` of the pairs with spatial distance <= r_max and |time lag| <= h_max.

    Points are swept in time order, so each chunk only compares a block of
    points with the points that follow it within ``h_max``; at most about
    ``max_block`` candidate pairs are held in memory at once. Every pair is
    reported once, with ``i`` and ``j`` as indices into the original pattern.
    """
    n = p.n
    if n < 2:
        return
    order = np.argsort(p.t, kind="stable")
    t, x, y = p.t[order], p.x[order], p.y[order]
    ends = np.searchsorted(t, t + h_max, side="right")
    r2 = r_max * r_max
    a = 0
    while a < n - 1:
        # grow the block while its candidate window stays within budget
        b = a + 1
        while b < n - 1 and (b + 1 - a) * (ends[b] - a) <= max_block:
            b += 1
        stop = max(ends[b - 1], b)
        ii = np.arange(a, b)[:, None]
        jj = np.arange(a, stop)[None, :]
        dx = x[a:b, None] - x[None, a:stop]
        dy = y[a:b, None] - y[None, a:stop]
        mask = (jj > ii) & (dx * dx + dy * dy <= r2) & (t[None, a:stop] - t[a:b, None] <= h_max)
        bi, bj = np.nonzero(mask)
        if len(bi):
            yield order[bi + a], order[bj + a]
        a = b


def close_pairs(p: PointPattern, r_max: float, h_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``i < j`` with spatial distance <= r_max and |time lag| <= h_max, sorted."""
    chunks = list(iter_close_pairs(p, r_max, h_max))
    if not chunks:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    i = np.concatenate([c[0] for c in chunks])
    j = np.concatenate([c[1] for c in chunks])
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    order = np.lexsort((hi, lo))
    return lo[order], hi[order]
