"""Uniform space grid and time grid at fixed parabolic mesh ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigError

_TOL = 1e-9


def _as_count(length: float, h: float, what: str) -> int:
    ratio = length / h
    n = round(ratio)
    if n < 1 or abs(ratio - n) > _TOL * max(1.0, ratio):
        lo = length / math.ceil(ratio) if ratio > 0 else float("nan")
        raise ConfigError(
            f"{what}={length:g} is not an integer multiple of h={h:g}; "
            f"nearest valid h is {length / max(n, 1):g} (or {lo:g})"
        )
    return n


@dataclass(frozen=True)
class GridSpec:
    """Truncated transformed domain ``[-R1, R1] x [L2, R2]`` with step ``h``.

    Node coordinates are ``x_i = i h`` (i = -N..N) and ``y_j = L2 + j h``
    (j = 0..M), always computed by multiplication.
    """

    R1: float
    L2: float
    R2: float
    h: float
    N: int
    M: int
    k: float
    T: float
    c: float

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.N + 1, self.M + 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1) * self.h

    @property
    def y(self) -> np.ndarray:
        return self.L2 + np.arange(self.M + 1) * self.h

    @property
    def time_steps(self) -> list[float]:
        """Step lengths; a shortened final step closes the gap to T."""
        n_full = int(math.floor(self.T / self.k * (1 + 1e-12)))
        steps = [self.k] * n_full
        rest = self.T - n_full * self.k
        if rest > 1e-12 * self.T:
            steps.append(rest)
        return steps

    @property
    def n_steps(self) -> int:
        return len(self.time_steps)

    @property
    def shortened_last_step(self) -> bool:
        steps = self.time_steps
        return len(steps) > 0 and steps[-1] != self.k

    def same_domain(self, other: "GridSpec") -> bool:
        return (
            math.isclose(self.R1, other.R1, rel_tol=1e-12)
            and math.isclose(self.L2, other.L2, rel_tol=1e-12)
            and math.isclose(self.R2, other.R2, rel_tol=1e-12)
        )

    def metadata(self) -> dict:
        return {
            "R1": self.R1,
            "L2": self.L2,
            "R2": self.R2,
            "h": self.h,
            "k": self.k,
            "c": self.c,
            "N": self.N,
            "M": self.M,
            "T": self.T,
            "n_steps": self.n_steps,
            "shortened_last_step": self.shortened_last_step,
        }


def build_grid(R1: float, L2: float, R2: float, h: float, c: float, T: float, k: float | None = None) -> GridSpec:
    """Build a grid with ``k = c h**2`` (or an explicit ``k``, which then fixes ``c``)."""
    if not h > 0:
        raise ConfigError(f"h must be > 0, got {h}")
    if not (R1 > 0 and R2 > L2 > 0):
        raise ConfigError(f"need R1 > 0 and R2 > L2 > 0, got R1={R1}, L2={L2}, R2={R2}")
    if not T > 0:
        raise ConfigError(f"T must be > 0, got {T}")
    N = _as_count(R1, h, "R1")
    M = _as_count(R2 - L2, h, "R2-L2")
    if N % 2 or M % 2:
        raise ConfigError(f"N={N} and M={M} must both be even for composite Simpson quadrature")
    if M < 4:
        raise ConfigError(f"need at least 4 intervals in y, got M={M}")
    if k is None:
        if not c > 0:
            raise ConfigError(f"mesh ratio c must be > 0, got {c}")
        k = c * h * h
    else:
        if not k > 0:
            raise ConfigError(f"k must be > 0, got {k}")
        c = k / (h * h)
    return GridSpec(R1=float(R1), L2=float(L2), R2=L2 + M * h, h=float(h), N=N, M=M, k=float(k), T=float(T), c=float(c))


@dataclass
class Surface:
    """Nodal values ``u[i + N, j]`` at time level ``tau``."""

    values: np.ndarray
    grid: GridSpec
    tau: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"surface shape {self.values.shape} does not match grid {self.grid.shape}")


def nesting_stride(fine: GridSpec, coarse: GridSpec) -> int:
    """Integer ratio ``coarse.h / fine.h``; raises if the grids are not nested."""
    if not fine.same_domain(coarse):
        raise ValueError("grids cover different domains")
    ratio = coarse.h / fine.h
    s = round(ratio)
    if s < 1 or abs(ratio - s) > 1e-9 * ratio:
        raise ValueError(f"h={coarse.h:g} is not an integer multiple of h={fine.h:g}")
    return s


def restrict(fine: Surface, coarse_grid: GridSpec) -> Surface:
    """Sample ``fine`` at the nodes of ``coarse_grid`` (no interpolation)."""
    s = nesting_stride(fine.grid, coarse_grid)
    return Surface(fine.values[::s, ::s].copy(), coarse_grid, fine.tau)
