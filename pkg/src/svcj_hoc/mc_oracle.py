"""Independent Monte Carlo pricer for the SVCJ put.

Log-Euler for the asset, full truncation Euler for the variance, and at most
one jump per sub-step with probability ``lambda * dt``.  Jumps are applied
after the diffusion update.  Shares nothing with the PDE engines except the
parameter record.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .model import PricingProblem, xi_s


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 1_000_000
    n_steps_per_year: int = 512
    seed: int = 12345
    antithetic: bool = True
    batch_size: int = 100_000

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.n_steps_per_year < 1:
            raise ValueError("n_steps_per_year must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


@dataclass
class McResult:
    price: float
    std_err: float
    n_paths: int
    seed: int
    payoff: str = "put"

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["version"] = __version__
        return d


def _simulate_batch(problem: PricingProblem, S0, sigma0, n, n_steps, rng, antithetic):
    """Terminal asset values for ``n`` paths (``n`` even when antithetic)."""
    p = problem.params
    dt = problem.T / n_steps
    sdt = math.sqrt(dt)
    drift = p.r - p.lam * xi_s(p)
    half = n // 2 if antithetic else n
    rho_c = math.sqrt(1.0 - p.rho**2)
    d = math.sqrt(p.delta2)
    x = np.full(n, math.log(S0))
    var = np.full(n, float(sigma0))
    for _ in range(n_steps):
        z = rng.standard_normal((3, half))
        if antithetic:
            z = np.concatenate([z, -z], axis=1)
        z1 = z[0]
        z2 = p.rho * z[0] + rho_c * z[1]
        vp = np.maximum(var, 0.0)
        sv = np.sqrt(vp)
        x += (drift - 0.5 * vp) * dt + sv * sdt * z1
        var += p.kappa * (p.theta - vp) * dt + p.v * sv * sdt * z2
        if p.lam > 0:
            jump = rng.random(half) < p.lam * dt
            zsig = rng.exponential(p.upsilon, half)
            if antithetic:
                jump = np.concatenate([jump, jump])
                zsig = np.concatenate([zsig, zsig])
            logj = p.gamma + p.rho_J * zsig + d * z[2]
            x += np.where(jump, logj, 0.0)
            var += np.where(jump, zsig, 0.0)
    return np.exp(x)


def simulate_terminal(problem: PricingProblem, S0: float, sigma0: float, cfg: McConfig):
    """Yield ``(S_T, pair_size)`` per batch; batches use independent seeded substreams."""
    n_steps = max(1, int(round(cfg.n_steps_per_year * problem.T)))
    n_batches = -(-cfg.n_paths // cfg.batch_size)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_batches)
    left = cfg.n_paths
    for ss in streams:
        n = min(cfg.batch_size, left)
        if cfg.antithetic and n % 2:
            n += 1
        left -= n
        yield _simulate_batch(problem, S0, sigma0, n, n_steps, np.random.default_rng(ss), cfg.antithetic)


def _estimate(samples: list[np.ndarray], antithetic: bool) -> tuple[float, float, int]:
    vals = []
    for s in samples:
        if antithetic:
            h = s.size // 2
            vals.append(0.5 * (s[:h] + s[h:]))
        else:
            vals.append(s)
    v = np.concatenate(vals)
    n_paths = sum(s.size for s in samples)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), n_paths


def simulate_price(problem: PricingProblem, cfg: McConfig = McConfig(), S0: float | None = None, sigma0: float | None = None) -> McResult:
    """Discounted put price and its standard error."""
    S0 = problem.K if S0 is None else S0
    sigma0 = problem.params.theta if sigma0 is None else sigma0
    disc = math.exp(-problem.params.r * problem.T)
    pay = [disc * np.maximum(problem.K - s, 0.0) for s in simulate_terminal(problem, S0, sigma0, cfg)]
    price, se, n = _estimate(pay, cfg.antithetic)
    return McResult(price, se, n, cfg.seed)


def martingale_check(problem: PricingProblem, cfg: McConfig = McConfig(), S0: float | None = None, sigma0: float | None = None) -> McResult:
    """Estimate of ``exp(-rT) E[S_T]``, which should equal S0."""
    S0 = problem.K if S0 is None else S0
    sigma0 = problem.params.theta if sigma0 is None else sigma0
    disc = math.exp(-problem.params.r * problem.T)
    vals = [disc * s for s in simulate_terminal(problem, S0, sigma0, cfg)]
    price, se, n = _estimate(vals, cfg.antithetic)
    return McResult(price, se, n, cfg.seed, payoff="forward")


def sample_jumps(params, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` joint jump sizes ``(z^S, z^sigma)``."""
    rng = np.random.default_rng(seed)
    zsig = rng.exponential(params.upsilon, n)
    zS = np.exp(rng.normal(params.gamma + params.rho_J * zsig, math.sqrt(params.delta2)))
    return zS, zsig


def black_scholes_put(S: float, K: float, r: float, vol: float, T: float) -> float:
    from scipy.stats import norm

    sd = vol * math.sqrt(T)
    d1 = (math.log(S / K) + (r + 0.5 * vol * vol) * T) / sd
    d2 = d1 - sd
    return K * math.exp(-r * T) * norm.cdf(-d2) - S * norm.cdf(-d1)
