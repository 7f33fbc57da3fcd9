"""Plain CSV / JSON input and output for patterns, fits, fields and summaries."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .contrast import GlobalFitResult, LocalFitResult
from .covariance import from_dict, make_model
from .geometry import PointPattern, SpaceTimeWindow
from .grf import GRFRealization
from .intensity import LocalIntensityField
from .stats import SummaryStatistic


def fmt(v) -> str:
    """Shortest round-tripping text for a number (integers and bools kept as such)."""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def parse_window(text: str):
    """``"X0,X1,Y0,Y1,T0,T1"`` to a window; ``"from-data"`` is passed through."""
    if text.strip() == "from-data":
        return "from-data"
    parts = text.split(",")
    if len(parts) != 6:
        raise ValueError(f"window needs six comma-separated numbers X0,X1,Y0,Y1,T0,T1, got {text!r}")
    try:
        return SpaceTimeWindow.from_bounds(float(v) for v in parts)
    except ValueError as exc:
        raise ValueError(f"invalid window {text!r}: {exc}") from None


def _read_rows(path, required: tuple[str, ...], allow_extra: bool = False):
    """Header and float rows of a CSV file; errors carry the 1-based line number."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header {','.join(required)}") from None
        if tuple(header[:len(required)]) != required or (not allow_extra and len(header) != len(required)):
            raise ValueError(f"{path}: line 1: expected header {','.join(required)}, got {','.join(header)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}: line {line}: non-numeric value in {','.join(row)!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: line {line}: non-finite value")
            rows.append((line, vals))
    return header, rows


def bounding_window(points: np.ndarray) -> SpaceTimeWindow:
    lo, hi = points.min(axis=0), points.max(axis=0)
    return SpaceTimeWindow.from_bounds((lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]))


def read_pattern(path, window) -> PointPattern:
    """Read an ``x,y,t`` CSV. ``window`` is a SpaceTimeWindow or ``"from-data"`` (bounding box)."""
    _, rows = _read_rows(path, ("x", "y", "t"))
    pts = np.array([v for _, v in rows], dtype=float).reshape(-1, 3)
    if isinstance(window, str):
        if window != "from-data":
            window = parse_window(window)
        elif len(pts) < 2:
            raise ValueError(f"{path}: n < 2: cannot take the bounding box of {len(pts)} point(s)")
        else:
            window = bounding_window(pts)
    if window is None:
        raise ValueError("no window given: pass --window X0,X1,Y0,Y1,T0,T1 or --window from-data")
    inside = window.contains(pts) if len(pts) else np.array([], dtype=bool)
    if not np.all(inside):
        bad = [f"line {rows[k][0]} ({','.join(fmt(v) for v in rows[k][1])})" for k in np.flatnonzero(~inside)]
        more = f" and {len(bad) - 20} more" if len(bad) > 20 else ""
        raise ValueError(f"{path}: {len(bad)} point(s) outside the window: {'; '.join(bad[:20])}{more}")
    return PointPattern(pts, window)


def write_pattern(path, p: PointPattern) -> None:
    write_csv(path, ("x", "y", "t"), p.points)


def read_covariates(path, window: SpaceTimeWindow):
    """Covariate table ``x,y,t,z1[,z2...]`` as a nearest-sample lookup function.

    Distances are measured after scaling each axis by the window width, so
    a space-time lattice is matched cell by cell.
    """
    header, rows = _read_rows(path, ("x", "y", "t"), allow_extra=True)
    if len(header) < 4:
        raise ValueError(f"{path}: line 1: need at least one covariate column after x,y,t")
    if not rows:
        raise ValueError(f"{path}: no covariate rows")
    table = np.array([v for _, v in rows], dtype=float)
    scale = np.array(window.widths)
    tree = cKDTree(table[:, :3] / scale)
    values = table[:, 3:]

    def lookup(xyt):
        _, idx = tree.query(np.atleast_2d(xyt) / scale)
        return values[idx]

    return tuple(header[3:]), lookup


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    with Path(path).open() as fh:
        return json.load(fh)


def read_model(path):
    """Covariance model from a parameter JSON or a global-fit JSON ``{model, params, ...}``."""
    d = read_json(path)
    if "params" in d:
        return make_model(d["model"], **d["params"])
    return from_dict(d)


def statistic_rows(stat: SummaryStatistic):
    r, h = stat.grid.r_values, stat.grid.h_values
    return [(r[a], h[b], stat.values[a, b]) for a in range(len(r)) for b in range(len(h))]


def write_statistic(path, stat: SummaryStatistic) -> None:
    write_csv(path, ("r", "h", "value"), statistic_rows(stat))


def write_stack(path, stat: SummaryStatistic) -> None:
    r, h = stat.grid.r_values, stat.grid.h_values
    rows = ((i, r[a], h[b], stat.values[i, a, b])
            for i in range(stat.values.shape[0]) for a in range(len(r)) for b in range(len(h)))
    write_csv(path, ("point_id", "r", "h", "value"), rows)


def write_local_fit(path, p: PointPattern, fit: LocalFitResult) -> None:
    names = ("sigma2", "alpha", "beta") + (("delta",) if fit.family == "gneiting" else ())
    header = ("point_id", "x", "y", "t", *names, "contrast", "converged")
    rows = ((i, *p.points[i], *(getattr(m, k) for k in names), fit.contrast[i], bool(fit.converged[i]))
            for i, m in enumerate(fit.params))
    write_csv(path, header, rows)


def read_local_fit(path, window: SpaceTimeWindow, global_fit: GlobalFitResult | None = None):
    """Per-point parameter CSV back to ``(pattern, LocalFitResult)``.

    Parameters not present in the file (Gneiting ``gamma_s``, ``gamma_t``)
    are taken from the global model when given, else their defaults.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh))]
    base = ("point_id", "x", "y", "t", "sigma2", "alpha", "beta")
    names = ["sigma2", "alpha", "beta"]
    if header[:7] != list(base):
        raise ValueError(f"{path}: line 1: expected header starting with {','.join(base)}")
    family = "gneiting" if "delta" in header else "sep_exp"
    if family == "gneiting":
        names.append("delta")
    expected = (*base, *names[3:], "contrast", "converged")
    if tuple(header) != expected:
        raise ValueError(f"{path}: line 1: expected header {','.join(expected)}, got {','.join(header)}")
    rows = _read_bool_rows(path, expected)
    extra = {}
    if global_fit is not None and family == "gneiting" and global_fit.params.family == "gneiting":
        extra = {"gamma_s": global_fit.params.gamma_s, "gamma_t": global_fit.params.gamma_t}
    pts = np.array([v[1:4] for _, v in rows]).reshape(-1, 3)
    params = [make_model(family, **dict(zip(names, v[4:4 + len(names)])), **extra) for _, v in rows]
    contrast = np.array([v[4 + len(names)] for _, v in rows])
    converged = np.array([bool(v[5 + len(names)]) for _, v in rows], dtype=bool)
    return PointPattern(pts, window), LocalFitResult(params, contrast, converged, None, global_fit)


def _read_bool_rows(path, expected):
    """Like ``_read_rows`` but with a trailing true/false column."""
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(expected):
                raise ValueError(f"{path}: line {line}: expected {len(expected)} fields, got {len(row)}")
            flag = row[-1].strip().lower()
            if flag not in ("true", "false", "1", "0"):
                raise ValueError(f"{path}: line {line}: converged must be true/false, got {row[-1]!r}")
            try:
                vals = [float(c) for c in row[:-1]]
            except ValueError:
                raise ValueError(f"{path}: line {line}: non-numeric value") from None
            out.append((line, vals + [1.0 if flag in ("true", "1") else 0.0]))
    return out


def write_field(path, field: GRFRealization) -> None:
    cx, cy, ct = field.grid.axes()
    nx, ny, nt = field.grid.shape
    rows = ((i, j, k, cx[i], cy[j], ct[k], field.values[i, j, k])
            for i in range(nx) for j in range(ny) for k in range(nt))
    write_csv(path, ("ix", "iy", "it", "x", "y", "t", "value"), rows)


def write_envelopes(path, result) -> None:
    r, h = result.grid.r_values, result.grid.h_values
    rows = ((r[a], h[b], result.lower[a, b], result.E_K[a, b], result.upper[a, b], result.observed[a, b])
            for a in range(len(r)) for b in range(len(h)))
    write_csv(path, ("r", "h", "lower", "mean", "upper", "observed"), rows)


def write_local_intensity(path, field: LocalIntensityField) -> None:
    k = field.theta.shape[1]
    header = ("vx", "vy", "vs", *(f"theta{j}" for j in range(k)), "lambda")
    rows = ((*field.locations[g], *field.theta[g], field.intensity[g]) for g in range(len(field.locations)))
    write_csv(path, header, rows)
