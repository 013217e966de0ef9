"""Second-order benchmark: central differences, trapezoid quadrature, Rannacher start."""

from __future__ import annotations

import scipy.sparse as sp

from .grid import GridSpec
from .model import PricingProblem, SvcjParams
from .pde import CoefficientSet, PriceResult, StencilOperators, assemble_stencil, boundary_rows, run_scheme


def central_coefficients(grid: GridSpec, params: SvcjParams) -> dict:
    y = grid.y
    h = grid.h
    cs = CoefficientSet(params)
    a = cs.diffusion(y)
    return {
        (2, 0): a / h**2,
        (0, 2): a / h**2,
        (1, 1): cs.cross(y) / h**2,
        (1, 0): cs.convection_x(y) / h,
        (0, 1): cs.convection_y(y) / h,
    }


def build_central_operators(grid: GridSpec, params: SvcjParams) -> StencilOperators:
    if grid.L2 <= 0:
        raise ValueError("L2 must be > 0")
    Lop = assemble_stencil(grid, central_coefficients(grid, params))
    Mass = assemble_stencil(grid, {(0, 0): 1.0})
    Bd, left, right = boundary_rows(grid)
    return StencilOperators(grid, Lop, sp.csr_matrix(Mass), Bd, left, right, scheme="ref")


def rannacher_schedule(n_steps: int) -> list[tuple[str, float]]:
    """Step kinds and lengths (in units of k) for a run of ``n_steps`` nominal steps.

    The first two steps are replaced by four implicit-Euler half steps.
    """
    if n_steps < 2:
        return [("crank_nicolson", 1.0)] * n_steps
    return [("implicit_euler", 0.5)] * 4 + [("crank_nicolson", 1.0)] * (n_steps - 2)


def solve(
    problem: PricingProblem,
    grid: GridSpec,
    quadrature: str = "trapezoid",
    backend: str = "fft",
    nodes: str = "coincident",
    edge_mode: str = "full",
    smoothing: bool = False,
    rannacher: bool = True,
    S0: float | None = None,
    sigma0: float | None = None,
) -> PriceResult:
    return run_scheme(
        problem,
        grid,
        build_central_operators,
        "ref",
        quadrature,
        backend=backend,
        nodes=nodes,
        edge_mode=edge_mode,
        smoothing=smoothing,
        rannacher=rannacher,
        S0=S0,
        sigma0=sigma0,
    )
