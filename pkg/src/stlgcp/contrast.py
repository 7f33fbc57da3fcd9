"""Joint and locally weighted minimum-contrast estimation of the covariance parameters."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .covariance import (MAX_EXPONENT, CovarianceModel, Gneiting, SeparableExponential, cov_eval,
                         pack_params, to_dict, unpack_params)
from .geometry import PointPattern
from .kernels import BandwidthSet, default_bandwidths
from .simplex import minimize_simplex
from .stats import LagGrid, SummaryStatistic, lista_weighted_all, pcf_global, pcf_local_all

TRANSFORMS = ("identity", "log")


@dataclass(frozen=True, eq=False)
class ContrastSpec:
    """Lag grid, weight ``phi(r, h)``, transform ``nu`` and model family of a contrast criterion.

    ``template`` supplies the fixed parameters (e.g. ``gamma_s``, ``gamma_t``
    for the Gneiting family); ``free`` names the parameters that are fitted.
    """

    grid: LagGrid
    family: str = "sep_exp"
    weight: Union[str, Callable] = "constant"
    transform: str = "identity"
    free: tuple[str, ...] | None = None
    template: CovarianceModel | None = None

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}; choose from {TRANSFORMS}")
        if self.family not in ("sep_exp", "gneiting"):
            raise ValueError(f"unknown family {self.family!r}")
        if not (self.weight == "constant" or callable(self.weight)):
            raise ValueError("weight must be 'constant' or a callable phi(r, h)")
        if self.template is None:
            tmpl = SeparableExponential(1.0, 1.0, 1.0) if self.family == "sep_exp" else Gneiting(1.0, 1.0, 1.0)
            object.__setattr__(self, "template", tmpl)
        if self.free is None:
            object.__setattr__(self, "free", self.template.free_names)

    def phi(self) -> np.ndarray:
        if self.weight == "constant":
            return np.ones(self.grid.shape)
        rr, hh = self.grid.mesh()
        return np.asarray(self.weight(rr, hh), dtype=float) * np.ones(self.grid.shape)

    def nu(self, values):
        values = np.asarray(values, dtype=float)
        if self.transform == "identity":
            return values
        return np.log(np.maximum(values, 1e-12))

    def model(self, **params) -> CovarianceModel:
        return replace(self.template, **params)


def _values_on(spec: ContrastSpec, empirical) -> np.ndarray:
    if isinstance(empirical, SummaryStatistic):
        if not empirical.grid.same_as(spec.grid):
            raise ValueError("empirical statistic is defined on a different lag grid")
        values = empirical.values
    else:
        values = np.asarray(empirical, dtype=float)
    if values.shape != spec.grid.shape:
        raise ValueError(f"empirical values shape {values.shape} does not match grid {spec.grid.shape}")
    return values


def contrast_value(spec: ContrastSpec, empirical, params: CovarianceModel) -> float:
    """Mean over the lag grid of ``phi * (nu[J_hat] - nu[g(r, h; params)])**2``."""
    values = _values_on(spec, empirical)
    rr, hh = spec.grid.mesh()
    model_values = np.exp(np.minimum(cov_eval(params, rr, hh), MAX_EXPONENT))
    return float(np.mean(spec.phi() * (spec.nu(values) - spec.nu(model_values)) ** 2))


class _Objective:
    """Contrast as a function of the packed (unconstrained) parameter vector."""

    def __init__(self, spec: ContrastSpec, target: np.ndarray):
        self.spec = spec
        self.template = spec.template
        self.free = spec.free
        self.rr, self.hh = spec.grid.mesh()
        self.phi = spec.phi()
        self.target = spec.nu(target)
        self.log = spec.transform == "log"

    def set_target(self, target: np.ndarray) -> None:
        self.target = self.spec.nu(target)

    def model(self, x) -> CovarianceModel:
        return unpack_params(x, self.template, self.free)

    def __call__(self, x) -> float:
        c = cov_eval(self.model(x), self.rr, self.hh)
        if np.max(c) > MAX_EXPONENT:
            return math.inf
        model_values = c if self.log else np.exp(c)
        return float(np.mean(self.phi * (self.target - model_values) ** 2))


@dataclass
class _Fit:
    x: np.ndarray
    value: float
    evals: int
    converged: bool


def _minimize(obj: _Objective, starts: Sequence[np.ndarray], options: dict) -> _Fit:
    """Best of several Nelder-Mead runs, each restarted from its optimum until it stops improving."""
    options = dict(options)
    restarts = options.pop("max_restarts", 4)
    best = None
    total = 0
    for x0 in starts:
        res = minimize_simplex(obj, x0, **options)
        total += res.n_evals
        for _ in range(restarts):
            again = minimize_simplex(obj, res.x, **options)
            total += again.n_evals
            improved = again.fun < res.fun - 1e-12 * (1.0 + abs(res.fun))
            if again.fun <= res.fun:
                again.converged = again.converged or res.converged
                res = again
            if not improved:
                break
        if best is None or res.fun < best.value:
            best = _Fit(res.x, res.fun, 0, res.converged)
    if best is None:
        raise ValueError("no starting values supplied")
    best.evals = total
    return best


@dataclass(frozen=True, eq=False)
class GlobalFitResult:
    params: CovarianceModel
    contrast: float
    converged: bool
    n_evals: int = 0
    empirical: SummaryStatistic | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = to_dict(self.params)
        model = d.pop("model")
        return {"model": model, "params": d, "contrast": float(self.contrast), "converged": bool(self.converged)}


@dataclass(frozen=True, eq=False)
class LocalFitResult:
    """Per-point parameter estimates aligned with the pattern order."""

    params: list
    contrast: np.ndarray
    converged: np.ndarray
    bandwidths: BandwidthSet | None = None
    global_fit: GlobalFitResult | None = None

    def __len__(self) -> int:
        return len(self.params)

    def values(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.params])

    @property
    def family(self) -> str:
        return self.params[0].family if self.params else "sep_exp"

    def summary(self) -> dict:
        """Min, quartiles, mean and max of each fitted parameter."""
        names = self.params[0].free_names if self.params else ()
        out = {}
        for name in names:
            v = self.values(name)
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            out[name] = {"min": float(v.min()), "q1": float(q1), "median": float(med),
                         "mean": float(v.mean()), "q3": float(q3), "max": float(v.max())}
        return out


DEFAULT_OPTIONS = {"xtol": 1e-6, "ftol": 1e-10, "max_evals": 2000, "initial_step": 0.1, "max_restarts": 4}


def default_starts(spec: ContrastSpec, empirical: np.ndarray) -> list[CovarianceModel]:
    """Scale-aware start plus two multiplicative jitters (x0.5, x1.5)."""
    g0 = float(empirical[0, 0])
    sigma2 = min(max(math.log(g0) if g0 > 1 else 0.5, 0.5), 15.0)
    base = {"sigma2": sigma2, "alpha": spec.grid.r_max / 5.0, "beta": spec.grid.h_max / 5.0}
    if spec.family == "gneiting":
        base["delta"] = 1.0
    starts = []
    for factor in (1.0, 0.5, 1.5):
        vals = {k: v * factor for k, v in base.items()}
        if "delta" in vals:
            vals["delta"] = min(vals["delta"], 2.0)
        starts.append(spec.model(**vals))
    return starts


def fit_contrast(spec: ContrastSpec, empirical, starts: Sequence[CovarianceModel] | None = None,
                 options: dict | None = None) -> GlobalFitResult:
    """Minimise the contrast between ``empirical`` and the model pcf from each start; keep the best."""
    values = _values_on(spec, empirical)
    opts = {**DEFAULT_OPTIONS, **(options or {})}
    starts = list(starts) if starts else default_starts(spec, values)
    obj = _Objective(spec, values)
    packed = []
    for s in starts:
        x = pack_params(s, spec.free)
        if math.isfinite(obj(x)):
            packed.append(x)
    if not packed:
        raise ValueError("all starting values give a non-finite contrast")
    fit = _minimize(obj, packed, opts)
    emp = empirical if isinstance(empirical, SummaryStatistic) else SummaryStatistic(spec.grid, values, "global_pcf")
    return GlobalFitResult(obj.model(fit.x), fit.value, fit.converged, fit.evals, emp)


def _resolve(p: PointPattern, spec, bw, family):
    if spec is None:
        spec = ContrastSpec(LagGrid.default(p.window), family=family)
    if bw is None:
        bw = default_bandwidths(p)
    return spec, bw


def fit_global(p: PointPattern, intensity, spec: ContrastSpec | None = None, bw: BandwidthSet | None = None,
               starts=None, family: str = "sep_exp", options: dict | None = None,
               correction="translation") -> GlobalFitResult:
    """Joint minimum-contrast fit of the covariance parameters to the global pcf of ``p``."""
    spec, bw = _resolve(p, spec, bw, family)
    empirical = pcf_global(p, intensity, bw, spec.grid, correction)
    return fit_contrast(spec, empirical, starts, options)


def _collapsed(obj: _Objective, fit: _Fit, x0: np.ndarray) -> bool:
    """Fit slid into the flat valley: variance vanished, or no better than ``g = 1``."""
    flat = float(np.mean(obj.phi * (obj.target - (0.0 if obj.log else 1.0)) ** 2))
    sigma2 = obj.model(fit.x).sigma2
    return sigma2 < 1e-3 * obj.model(x0).sigma2 or fit.value >= flat * (1 - 1e-9)


def _fit_targets(spec: ContrastSpec, targets: np.ndarray, x0: np.ndarray, options: dict):
    """Warm-started fits; a collapsed fit is retried from the scale-aware default starts."""
    obj = _Objective(spec, targets[0])
    out = []
    for target in targets:
        obj.set_target(target)
        fit = _minimize(obj, [x0], options)
        if _collapsed(obj, fit, x0):
            starts = [x for x in (pack_params(m, spec.free) for m in default_starts(spec, target))
                      if math.isfinite(obj(x))]
            if starts:
                retry = _minimize(obj, starts, options)
                if retry.value < fit.value:
                    fit = retry
        out.append((fit.x, fit.value, fit.converged))
    return out


def fit_local(p: PointPattern, intensity, spec: ContrastSpec | None = None, bw: BandwidthSet | None = None,
              starts=None, family: str = "sep_exp", options: dict | None = None, correction="translation",
              global_fit: GlobalFitResult | None = None, n_jobs: int = 1) -> LocalFitResult:
    """Locally weighted minimum contrast: one parameter vector per point.

    The local pcf stack is computed once; each point's target curve is the
    kernel-weighted average of the stack around it, and each minimisation
    is warm-started from the global fit.
    """
    spec, bw = _resolve(p, spec, bw, family)
    opts = {**DEFAULT_OPTIONS, **(options or {})}
    stack = pcf_local_all(p, intensity, bw, spec.grid, correction)
    if global_fit is None:
        global_fit = fit_contrast(spec, pcf_global(p, intensity, bw, spec.grid, stack=stack), starts, opts)
    averaged = lista_weighted_all(stack, p, bw)
    x0 = pack_params(global_fit.params, spec.free)
    if n_jobs > 1 and p.n > 1:
        chunks = np.array_split(np.arange(p.n), n_jobs * 4)
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(_fit_targets, [spec] * len(chunks), [averaged[c] for c in chunks],
                                [x0] * len(chunks), [opts] * len(chunks)))
        results = [r for part in parts for r in part]
    else:
        results = _fit_targets(spec, averaged, x0, opts)
    params = [unpack_params(x, spec.template, spec.free) for x, _, _ in results]
    contrast = np.array([v for _, v, _ in results])
    converged = np.array([c for _, _, c in results], dtype=bool)
    return LocalFitResult(params, contrast, converged, bw, global_fit)
