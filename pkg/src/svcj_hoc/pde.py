"""Machinery shared by the HOC and central-difference engines.

Both schemes are written in the generic form

    Mass (u_tau - f) = Lop u,     f = lambda * I[u]

on interior nodes, with boundary rows imposed algebraically: Dirichlet data at
x = -R1 and x = +R1, and a one-sided closure u_yy = 0 at y = L2 and y = R2
(fourth-order accurate by default, see ``Y_CLOSURES``).  Crank-Nicolson
treats ``Lop`` implicitly and the integral is extrapolated explicitly (Adams-Bashforth).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import splu

from . import __version__
from . import jump_quadrature as jq
from .grid import GridSpec, Surface
from .model import PricingProblem, SvcjParams, deep_itm_u, payoff_u, u_to_price

# 1D three-point stencils at offsets (-1, 0, +1) for derivative order 0, 1, 2.
_ID = np.array([0.0, 1.0, 0.0])
_D1 = np.array([-0.5, 0.0, 0.5])
_D2 = np.array([1.0, -2.0, 1.0])

# one-sided approximations of h^2 u_yy at a boundary node, moving inward;
# key is the order of accuracy
Y_CLOSURES = {
    2: np.array([2.0, -5.0, 4.0, -1.0]),
    3: np.array([35.0, -104.0, 114.0, -56.0, 11.0]) / 12.0,
    4: np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
}
Y_CLOSURE_ORDER = 4


class NumericalError(RuntimeError):
    """Raised when a time-stepping run produces non-finite values or cannot factor."""


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of the transformed differential operator as functions of y."""

    params: SvcjParams

    def diffusion(self, y):
        return 0.5 * self.params.v * y

    def cross(self, y):
        return self.params.rho * self.params.v * y

    def convection_x(self, y):
        p = self.params
        return -(0.5 * p.v * y - p.r + p.lam * p.xi_s)

    def convection_y(self, y):
        p = self.params
        return p.kappa * (p.theta - p.v * y) / p.v

    def apply_exact(self, derivs: dict, y):
        """L_D u from a dict of exact partial derivatives keyed 'x','y','xx','yy','xy'."""
        return (
            self.diffusion(y) * (derivs["xx"] + derivs["yy"])
            + self.cross(y) * derivs["xy"]
            + self.convection_x(y) * derivs["x"]
            + self.convection_y(y) * derivs["y"]
        )


def node_index(grid: GridSpec) -> np.ndarray:
    nx, ny = grid.shape
    return np.arange(nx * ny).reshape(nx, ny)


def assemble_stencil(grid: GridSpec, coefs: dict, col_scale: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse 9-point operator on interior rows.

    ``coefs[(a, b)]`` is an array over y nodes multiplying the product of the
    central difference of order ``a`` in x and ``b`` in y (unscaled by h; the
    caller folds powers of h into the coefficients).  ``col_scale`` multiplies
    column j of the stencil by a factor depending on the neighbour's y index.
    """
    nx, ny = grid.shape
    st = {0: _ID, 1: _D1, 2: _D2}
    weights = np.zeros((ny, 3, 3))
    for (a, b), c in coefs.items():
        c = np.broadcast_to(np.asarray(c, dtype=float), (ny,))
        weights += c[:, None, None] * np.outer(st[a], st[b])[None, :, :]
    idx = node_index(grid)
    ii, jj = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    rows, cols, vals = [], [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            w = weights[jj, di + 1, dj + 1]
            if col_scale is not None:
                w = w * col_scale[jj + dj]
            rows.append(idx[ii, jj].ravel())
            cols.append(idx[ii + di, jj + dj].ravel())
            vals.append(w.ravel())
    n = nx * ny
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def boundary_rows(grid: GridSpec, closure_order: int = Y_CLOSURE_ORDER) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Algebraic boundary rows and the node sets for x = -R1 and x = +R1."""
    closure = Y_CLOSURES[closure_order]
    nx, ny = grid.shape
    idx = node_index(grid)
    rows, cols, vals = [], [], []
    left, right = idx[0, :], idx[-1, :]
    for nodes in (left, right):
        rows.append(nodes)
        cols.append(nodes)
        vals.append(np.ones(ny))
    inner = np.arange(1, nx - 1)
    for j0, step in ((0, 1), (ny - 1, -1)):
        for m, w in enumerate(closure):
            rows.append(idx[inner, j0])
            cols.append(idx[inner, j0 + step * m])
            vals.append(np.full(inner.size, w))
    n = nx * ny
    Bd = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return Bd, left, right


def apply_boundaries(
    values: np.ndarray, grid: GridSpec, tau: float, params: SvcjParams, closure_order: int = Y_CLOSURE_ORDER
) -> np.ndarray:
    """Return a copy with x-boundary data at ``tau`` and closed y-boundary rows."""
    u = np.array(values, dtype=float)
    c = Y_CLOSURES[closure_order]
    m = c.size
    u[1:-1, 0] = -(u[1:-1, 1:m] @ c[1:]) / c[0]
    u[1:-1, -1] = -(u[1:-1, -2 : -m - 1 : -1] @ c[1:]) / c[0]
    u[0, :] = deep_itm_u(-grid.R1, tau, params)
    u[-1, :] = 0.0
    return u


def _bspline4(x):
    ax = np.abs(x)
    return np.where(ax <= 1, (4 - 6 * ax**2 + 3 * ax**3) / 6, np.where(ax <= 2, (2 - ax) ** 3 / 6, 0.0))


def smoothing_kernel(s):
    """Fourth-order smoothing kernel Phi_4 (support [-3, 3], unit mass)."""
    return 4.0 / 3.0 * _bspline4(s) - (_bspline4(s - 1) + _bspline4(s + 1)) / 6.0


def smoothed_payoff(x: np.ndarray, h: float) -> np.ndarray:
    """Payoff convolved with ``Phi_4(./h)/h`` at nodes within 3h of the kink."""
    out = payoff_u(x)
    for i in np.flatnonzero(np.abs(x) < 3 * h):
        xi = x[i]
        f = lambda s, xi=xi: smoothing_kernel(s) * float(payoff_u(xi - h * s))
        pts = [p for p in sorted({-2.0, -1.0, 0.0, 1.0, 2.0, xi / h}) if -3 < p < 3]
        out[i] = quad(f, -3.0, 3.0, points=pts, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return out


def initial_surface(grid: GridSpec, params: SvcjParams, smoothing: bool) -> Surface:
    x = grid.x
    u0 = smoothed_payoff(x, grid.h) if smoothing else payoff_u(x)
    values = np.repeat(u0[:, None], grid.M + 1, axis=1)
    return Surface(apply_boundaries(values, grid, 0.0, params), grid, 0.0)


@dataclass
class StencilOperators:
    """Spatial operator, mass operator and boundary rows of one scheme.

    ``A(k) = Mass - k/2 Lop + boundary`` and ``B(k) = Mass + k/2 Lop``; each
    distinct step length is factorised once and cached.
    """

    grid: GridSpec
    Lop: sp.csr_matrix
    Mass: sp.csr_matrix
    Bd: sp.csr_matrix
    left: np.ndarray
    right: np.ndarray
    scheme: str
    factor_count: int = 0
    factor_seconds: float = 0.0
    _lu: dict = field(default_factory=dict, repr=False)
    _B: dict = field(default_factory=dict, repr=False)

    def A(self, k: float) -> sp.csc_matrix:
        return (self.Mass - 0.5 * k * self.Lop + self.Bd).tocsc()

    def B(self, k: float) -> sp.csr_matrix:
        if k not in self._B:
            self._B[k] = (self.Mass + 0.5 * k * self.Lop).tocsr()
        return self._B[k]

    def factor(self, k: float):
        lu = self._lu.get(k)
        if lu is None:
            A = self.A(k)
            t0 = time.perf_counter()
            try:
                lu = splu(A, permc_spec="COLAMD")
            except RuntimeError as exc:
                g = self.grid
                raise NumericalError(
                    f"singular system matrix for scheme={self.scheme}, h={g.h}, k={k}, L2={g.L2}: {exc}"
                ) from exc
            self.factor_seconds += time.perf_counter() - t0
            self.factor_count += 1
            self._lu[k] = lu
        return lu

    def boundary_rhs(self, rhs: np.ndarray, tau: float, params: SvcjParams) -> np.ndarray:
        rhs[self.left] = deep_itm_u(-self.grid.R1, tau, params)
        rhs[self.right] = 0.0
        return rhs


def step_imex(
    u_n: Surface,
    I_n: Surface,
    I_nm1: Surface | None,
    ops: StencilOperators,
    k: float,
    params: SvcjParams,
    k_prev: float | None = None,
) -> Surface:
    """One Crank-Nicolson step with Adams-Bashforth extrapolation of the integral.

    ``I_n`` and ``I_nm1`` are the lambda-scaled integral terms; with
    ``I_nm1=None`` the previous level is taken equal to ``I_n``.
    """
    f = I_n.values
    if I_nm1 is not None:
        w = 0.5 * k / (k_prev if k_prev else k)
        f = (1.0 + w) * I_n.values - w * I_nm1.values
    rhs = ops.B(k) @ u_n.values.ravel() + k * (ops.Mass @ f.ravel())
    tau = u_n.tau + k
    ops.boundary_rhs(rhs, tau, params)
    lu = ops.factor(k)
    new = lu.solve(rhs).reshape(u_n.grid.shape)
    return Surface(new, u_n.grid, tau)


def step_implicit_euler(u_n: Surface, I_n: Surface, ops: StencilOperators, k2: float, params: SvcjParams, k_factor: float):
    """Implicit Euler sub-step of length ``k2 = k_factor / 2`` with the integral at the old level.

    ``Mass - k2 Lop`` equals the Crank-Nicolson matrix of step ``2 k2``, so the
    factorisation is shared.
    """
    rhs = ops.Mass @ u_n.values.ravel() + k2 * (ops.Mass @ I_n.values.ravel())
    tau = u_n.tau + k2
    ops.boundary_rhs(rhs, tau, params)
    new = ops.factor(k_factor).solve(rhs).reshape(u_n.grid.shape)
    return Surface(new, u_n.grid, tau)


@dataclass
class PriceResult:
    scheme: str
    price: float | None
    surface: Surface
    timings: dict
    flags: dict
    factor_count: int
    S0: float | None = None
    sigma0: float | None = None
    K: float = 100.0

    @property
    def grid(self) -> GridSpec:
        return self.surface.grid

    def price_surface(self) -> np.ndarray:
        """Option values in currency on the grid at maturity."""
        return u_to_price(self.surface.values, self.surface.tau, self.flags["params"], self.K)

    def to_json_dict(self) -> dict:
        flags = {k: v for k, v in self.flags.items() if k != "params"}
        return {
            "version": __version__,
            "scheme": self.scheme,
            "price": self.price,
            "S0": self.S0,
            "sigma0": self.sigma0,
            "grid": self.grid.metadata(),
            "timing": self.timings,
            "factor_count": self.factor_count,
            "flags": flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def read_off(surface: Surface, x0: float, y0: float) -> float:
    """Bicubic spline value of a surface at ``(x0, y0)``."""
    g = surface.grid
    if not (-g.R1 <= x0 <= g.R1 and g.L2 <= y0 <= g.R2):
        raise ValueError(f"point (x={x0:g}, y={y0:g}) lies outside the computational domain")
    spline = RectBivariateSpline(g.x, g.y, surface.values, kx=3, ky=3, s=0)
    return float(spline(x0, y0)[0, 0])


def run_scheme(
    problem: PricingProblem,
    grid: GridSpec,
    ops_builder,
    scheme: str,
    quadrature: str,
    backend: str = "fft",
    nodes: str = "coincident",
    edge_mode: str = "full",
    smoothing: bool = False,
    rannacher: bool = False,
    S0: float | None = None,
    sigma0: float | None = None,
) -> PriceResult:
    """Time-march the payoff to maturity and read off the price."""
    params = problem.params
    if not math.isclose(grid.T, problem.T, rel_tol=1e-12):
        raise ValueError(f"grid maturity {grid.T} differs from problem maturity {problem.T}")
    t_start = time.perf_counter()
    ops = ops_builder(grid, params)
    kernel = None
    if params.lam > 0:
        kernel = jq.tabulate_kernel(grid, params, quadrature, edge_mode, nodes)
    u = initial_surface(grid, params, smoothing)
    setup_s = time.perf_counter() - t_start

    integral_s = 0.0
    zero = Surface(np.zeros(grid.shape), grid)

    def integral(s: Surface) -> Surface:
        nonlocal integral_s
        if kernel is None:
            return Surface(zero.values, grid, s.tau)
        t0 = time.perf_counter()
        out = jq.apply(kernel, s, backend)
        out.values *= params.lam
        integral_s += time.perf_counter() - t0
        return out

    steps = grid.time_steps
    I_prev, k_prev = None, None
    start = 0
    t_loop = time.perf_counter()
    if rannacher and len(steps) >= 2 and steps[0] == steps[1]:
        k = steps[0]
        for sub in range(4):
            I_n = integral(u)
            if sub == 2:
                I_prev, k_prev = I_n, k
            u = step_implicit_euler(u, I_n, ops, 0.5 * k, params, k)
            _check_finite(u, sub, params)
        start = 2
    for n in range(start, len(steps)):
        k = steps[n]
        I_n = integral(u)
        u = step_imex(u, I_n, I_prev, ops, k, params, k_prev)
        _check_finite(u, n, params)
        I_prev, k_prev = I_n, k
    loop_s = time.perf_counter() - t_loop
    total_s = time.perf_counter() - t_start

    timings = {
        "setup_s": setup_s,
        "factor_s": ops.factor_seconds,
        "step_s": max(loop_s - integral_s - ops.factor_seconds, 0.0),
        "integral_s": integral_s,
        "total_s": total_s,
    }
    flags = {
        "params": params,
        "problem": problem.to_json_dict(),
        "quadrature": quadrature,
        "backend": backend,
        "nodes": nodes,
        "edge_mode": edge_mode,
        "smoothing": smoothing,
        "rannacher": "4 implicit-Euler half-steps" if rannacher else None,
        "y_boundary": f"one-sided u_yy = 0, order {Y_CLOSURE_ORDER}",
        "shortened_last_step": grid.shortened_last_step,
        "max_cell_peclet": cell_peclet(grid, params),
    }
    price = None
    if S0 is not None:
        s0 = sigma0 if sigma0 is not None else params.theta
        u0 = read_off(u, math.log(S0 / problem.K), s0 / params.v)
        price = float(u_to_price(u0, problem.T, params, problem.K))
    return PriceResult(scheme, price, u, timings, flags, ops.factor_count, S0, sigma0, problem.K)


# the exact transformed put value lies in [0, exp(lambda tau)]
_DIVERGENCE_FACTOR = 1e3


def _check_finite(u: Surface, step: int, params: SvcjParams) -> None:
    if not np.all(np.isfinite(u.values)):
        raise NumericalError(f"non-finite values after time step {step}")
    bound = _DIVERGENCE_FACTOR * math.exp(params.lam * u.tau)
    if np.abs(u.values).max() > bound:
        raise NumericalError(
            f"solution diverged after time step {step} (max |u| = {np.abs(u.values).max():.3g}); "
            f"max cell Peclet number is {cell_peclet(u.grid, params):.3g}, refine h"
        )


def cell_peclet(grid: GridSpec, params: SvcjParams) -> float:
    """max h |convection| / (2 diffusion) over the grid, per direction."""
    cs = CoefficientSet(params)
    y = grid.y
    a = cs.diffusion(y)
    return float(grid.h * max(np.abs(cs.convection_x(y) / a).max(), np.abs(cs.convection_y(y) / a).max()) / 2)
