"""Covariance families of the driving Gaussian field and the induced LGCP pair correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Union

import numpy as np

DELTA_CLAMP = 2.0 - 1e-9
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class SeparableExponential:
    """``C(r, h) = sigma2 * exp(-r / alpha) * exp(-h / beta)``."""

    sigma2: float
    alpha: float
    beta: float

    family = "sep_exp"
    free_names = ("sigma2", "alpha", "beta")

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class Gneiting:
    """Gneiting space-time family with d = 2.

    ``C(r, h) = sigma2 / psi(h) ** (delta / gamma_t) * exp(-(r/alpha) ** gamma_s / psi(h) ** (delta / (2 gamma_t)))``
    with ``psi(h) = (h / beta) ** gamma_t + 1``.
    """

    sigma2: float
    alpha: float
    beta: float
    delta: float = 1.0
    gamma_s: float = 1.0
    gamma_t: float = 1.0

    family = "gneiting"
    free_names = ("sigma2", "alpha", "beta", "delta")

    def __post_init__(self):
        for name in ("sigma2", "alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        for name in ("delta", "gamma_s", "gamma_t"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0 < v <= 2):
                raise ValueError(f"{name} must lie in (0, 2], got {v}")


CovarianceModel = Union[SeparableExponential, Gneiting]
FAMILIES = {"sep_exp": SeparableExponential, "gneiting": Gneiting}


def cov_eval(m: CovarianceModel, r, h):
    """Covariance at spatial distance ``r`` and time lag ``h`` (broadcasts)."""
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(r < 0) or np.any(h < 0):
        raise ValueError("distances and time lags must be non-negative")
    if isinstance(m, SeparableExponential):
        out = m.sigma2 * np.exp(-r / m.alpha - h / m.beta)
    else:
        psi = (h / m.beta) ** m.gamma_t + 1.0
        out = m.sigma2 / psi ** (m.delta / m.gamma_t) * np.exp(
            -((r / m.alpha) ** m.gamma_s) / psi ** (m.delta / (2.0 * m.gamma_t))
        )
    return out if out.ndim else float(out)


def pcf_theoretical(m: CovarianceModel, r, h):
    """LGCP pair correlation ``g(r, h) = exp(C(r, h))``."""
    c = np.asarray(cov_eval(m, r, h))
    if np.any(c > MAX_EXPONENT):
        raise OverflowError("covariance exceeds the exponent cap of the pair correlation")
    out = np.exp(c)
    return out if out.ndim else float(out)


def _logit_half(v: float) -> float:
    q = min(v, DELTA_CLAMP) / 2.0
    return math.log(q / (1.0 - q))


def _expit_double(x: float) -> float:
    if x >= 0:
        return 2.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return 2.0 * e / (1.0 + e)


def pack_params(m: CovarianceModel, free: tuple[str, ...] | None = None) -> np.ndarray:
    """Map the free parameters of ``m`` to an unconstrained vector.

    Scale parameters use a log transform; ``delta``, ``gamma_s`` and
    ``gamma_t`` use a logit scaled to (0, 2), clamped at 2 - 1e-9.
    """
    free = free or m.free_names
    out = []
    for name in free:
        v = getattr(m, name)
        out.append(math.log(v) if name in ("sigma2", "alpha", "beta") else _logit_half(v))
    return np.array(out)


def unpack_params(x, template: CovarianceModel, free: tuple[str, ...] | None = None) -> CovarianceModel:
    """Inverse of :func:`pack_params`; fixed parameters are taken from ``template``."""
    free = free or template.free_names
    x = np.asarray(x, dtype=float)
    if x.shape != (len(free),):
        raise ValueError(f"expected {len(free)} packed values, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("packed parameter vector must be finite")
    vals = {}
    for name, v in zip(free, x):
        vals[name] = math.exp(v) if name in ("sigma2", "alpha", "beta") else _expit_double(v)
    return replace(template, **vals)


def to_dict(m: CovarianceModel) -> dict:
    d = {"model": m.family}
    d.update({f.name: float(getattr(m, f.name)) for f in fields(m)})
    return d


def from_dict(d: dict) -> CovarianceModel:
    d = dict(d)
    family = d.pop("model", "sep_exp")
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown model {family!r}; expected one of {sorted(FAMILIES)}") from None
    allowed = {f.name for f in fields(cls)}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown keys for {family}: {sorted(unknown)}")
    return cls(**{k: float(v) for k, v in d.items()})


def make_model(family: str, **params) -> CovarianceModel:
    return from_dict({"model": family, **params})
