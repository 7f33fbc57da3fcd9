"""Derivative-free Nelder-Mead simplex minimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    reason: str

    def __iter__(self):
        # allows ``x, fun = minimize_simplex(...)``
        yield self.x
        yield self.fun


def _safe(f, x):
    try:
        v = float(f(x))
    except (ValueError, OverflowError, FloatingPointError, ZeroDivisionError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def minimize_simplex(f, x0, *, initial_step: float = 0.1, xtol: float = 1e-6, ftol: float = 1e-10,
                     max_evals: int = 2000, reflect: float = 1.0, expand: float = 2.0,
                     contract: float = 0.5, shrink: float = 0.5) -> SimplexResult:
    """Minimise ``f`` from ``x0`` with the Nelder-Mead simplex method.

    Stops when the simplex diameter drops below ``xtol``, when the spread of
    vertex values drops below ``ftol``, or after ``max_evals`` evaluations.
    Non-finite objective values are treated as ``+inf``, which forces
    contraction or shrinking away from them.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    dim = len(x0)
    f0 = _safe(f, x0)
    if not math.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")
    simplex = np.empty((dim + 1, dim))
    values = np.empty(dim + 1)
    simplex[0], values[0] = x0, f0
    for k in range(dim):
        v = x0.copy()
        v[k] += initial_step
        simplex[k + 1] = v
        values[k + 1] = _safe(f, v)
    evals = dim + 1
    reason = "max_evals"
    converged = False

    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        diameter = float(np.max(np.abs(simplex[1:] - simplex[0])))
        spread = values[-1] - values[0]
        if diameter < xtol:
            converged, reason = True, "xtol"
            break
        if spread < ftol:
            converged, reason = True, "ftol"
            break

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + reflect * (centroid - worst)
        fr = _safe(f, xr)
        evals += 1
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe = centroid + expand * (xr - centroid)
            fe = _safe(f, xe)
            evals += 1
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + contract * (xr - centroid)
            fc = _safe(f, xc)
            evals += 1
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + contract * (worst - centroid)
            fc = _safe(f, xc)
            evals += 1
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        for k in range(1, dim + 1):
            simplex[k] = simplex[0] + shrink * (simplex[k] - simplex[0])
            values[k] = _safe(f, simplex[k])
        evals += dim

    if not np.all(np.isfinite(values)):
        # the search kept hitting non-finite values around the best vertex
        converged, reason = False, "non-finite"
    best = int(np.argmin(values))
    return SimplexResult(simplex[best].copy(), float(values[best]), evals, converged, reason)
