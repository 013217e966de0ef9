"""SVCJ model constants, jump law and the log/scaled variable transform.

Prices are handled per unit strike internally.  In transformed variables

    x = log(S / K),   y = sigma / v,   tau = T - t,   u = exp((r + lambda) tau) V / K

the pricing PIDE has no zeroth-order term and the put payoff is
``max(1 - exp(x), 0)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


@dataclass(frozen=True)
class SvcjParams:
    """Risk-neutral SVCJ parameters.

    ``lam`` is the jump intensity (JSON key ``lambda``); ``delta2`` is the
    variance of the log asset jump.
    """

    kappa: float = 2.0
    theta: float = 0.01
    v: float = 0.25
    rho: float = -0.5
    upsilon: float = 0.2
    r: float = 0.05
    lam: float = 0.2
    gamma: float = -0.5
    rho_J: float = -0.5
    delta2: float = 0.16

    def __post_init__(self):
        if not self.v > 0:
            raise ConfigError(f"v must be > 0, got {self.v}")
        if not self.upsilon > 0:
            raise ConfigError(f"upsilon must be > 0, got {self.upsilon}")
        if not self.delta2 > 0:
            raise ConfigError(f"delta2 must be > 0, got {self.delta2}")
        if self.lam < 0 or self.kappa < 0 or self.theta < 0:
            raise ConfigError("lambda, kappa and theta must be nonnegative")
        if abs(self.rho) > 1:
            raise ConfigError(f"|rho| must be <= 1, got {self.rho}")
        if self.upsilon * self.rho_J >= 1:
            raise ConfigError("upsilon * rho_J must be < 1 for a finite mean jump")

    @property
    def delta(self) -> float:
        return math.sqrt(self.delta2)

    @property
    def xi_s(self) -> float:
        return xi_s(self)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass(frozen=True)
class PricingProblem:
    """European put on a SVCJ asset."""

    params: SvcjParams = field(default_factory=SvcjParams)
    K: float = 100.0
    T: float = 0.5
    option_kind: str = "put"

    def __post_init__(self):
        if not self.K > 0:
            raise ConfigError(f"strike K must be > 0, got {self.K}")
        if not self.T > 0:
            raise ConfigError(f"maturity T must be > 0, got {self.T}")
        if self.option_kind != "put":
            raise ConfigError(f"only put options are supported, got {self.option_kind!r}")

    def to_json_dict(self) -> dict:
        d = self.params.to_json_dict()
        d.update(K=self.K, T=self.T)
        return d


_PARAM_KEYS = {f.name for f in fields(SvcjParams)} - {"lam"} | {"lambda"}
PROBLEM_KEYS = frozenset(_PARAM_KEYS | {"K", "T"})


def problem_from_dict(data: dict) -> PricingProblem:
    """Build a problem from the flat JSON layout; unknown keys are fatal."""
    unknown = sorted(set(data) - PROBLEM_KEYS)
    if unknown:
        raise ConfigError(f"unknown parameter key(s): {', '.join(unknown)}")
    kw = {}
    for key, value in data.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"parameter {key!r} must be a number, got {value!r}")
        kw[key] = float(value)
    K = kw.pop("K", 100.0)
    T = kw.pop("T", 0.5)
    if "lambda" in kw:
        kw["lam"] = kw.pop("lambda")
    return PricingProblem(SvcjParams(**kw), K=K, T=T)


def load_problem(path) -> PricingProblem:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return problem_from_dict(data)


def xi_s(params: SvcjParams) -> float:
    """Mean relative asset jump, E[z^S] - 1."""
    denom = 1.0 - params.upsilon * params.rho_J
    if denom <= 0:
        raise ValueError("xi_s undefined for upsilon * rho_J >= 1")
    return math.exp(params.gamma + 0.5 * params.delta2) / denom - 1.0


def jump_density(zS, zsigma, params: SvcjParams):
    """Joint density of (asset jump factor, variance jump size)."""
    zS = np.asarray(zS, dtype=float)
    zsigma = np.asarray(zsigma, dtype=float)
    if np.any(zS <= 0) or np.any(zsigma < 0):
        raise ValueError("jump_density requires zS > 0 and zsigma >= 0")
    d = params.delta
    expo = -zsigma / params.upsilon - (np.log(zS) - params.gamma - params.rho_J * zsigma) ** 2 / (
        2.0 * params.delta2
    )
    out = np.exp(expo) / (_SQRT_2PI * zS * d * params.upsilon)
    return out[()] if out.ndim == 0 else out


def transformed_density(zx, zy, params: SvcjParams):
    """Jump density in (log asset, scaled variance) offsets.

    Equal to ``v * exp(zx) * p(exp(zx), v * zy)`` for ``zy >= 0`` and zero
    below; the ``exp(zx)`` Jacobian cancels against the lognormal ``1/zS``.
    """
    zx = np.asarray(zx, dtype=float)
    zy = np.asarray(zy, dtype=float)
    zsig = params.v * np.where(zy >= 0, zy, 0.0)
    expo = -zsig / params.upsilon - (zx - params.gamma - params.rho_J * zsig) ** 2 / (2.0 * params.delta2)
    pref = params.v / (_SQRT_2PI * params.delta * params.upsilon)
    out = np.where(zy >= 0, pref * np.exp(expo), 0.0)
    return out[()] if out.ndim == 0 else out


def transformed_density_smooth(zx, zy, params: SvcjParams):
    """Analytic continuation of :func:`transformed_density` to ``zy < 0``."""
    zx = np.asarray(zx, dtype=float)
    zsig = params.v * np.asarray(zy, dtype=float)
    expo = -zsig / params.upsilon - (zx - params.gamma - params.rho_J * zsig) ** 2 / (2.0 * params.delta2)
    return params.v / (_SQRT_2PI * params.delta * params.upsilon) * np.exp(expo)


def price_to_u(V, tau, params: SvcjParams, K: float = 1.0):
    return np.exp((params.r + params.lam) * np.asarray(tau)) * np.asarray(V) / K


def u_to_price(u, tau, params: SvcjParams, K: float = 1.0):
    return K * np.exp(-(params.r + params.lam) * np.asarray(tau)) * np.asarray(u)


def payoff_u(x):
    """Put payoff per unit strike in log-moneyness."""
    return np.maximum(1.0 - np.exp(x), 0.0)


def deep_itm_u(x, tau, params: SvcjParams):
    """Transformed value of the discounted-intrinsic put ``K exp(-r tau) - S``."""
    return np.exp(params.lam * tau) - np.exp(x + (params.r + params.lam) * tau)


def with_params(problem: PricingProblem, **changes) -> PricingProblem:
    return replace(problem, params=replace(problem.params, **changes))
