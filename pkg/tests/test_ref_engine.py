import numpy as np
import pytest

from svcj_hoc import ref_engine
from svcj_hoc.grid import build_grid
from svcj_hoc.model import PricingProblem, SvcjParams, with_params
from svcj_hoc.pde import CoefficientSet

from test_hoc_engine import manufactured_residual

P = SvcjParams()


def test_manufactured_order_two():
    hs = [0.05, 0.025, 0.0125, 0.00625]
    errs = [manufactured_residual(ref_engine.build_central_operators, h) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.3, (slope, errs)


def test_exact_on_bilinear():
    g = build_grid(1.6, 0.4, 2.0, 0.2, 0.4, 0.5)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    ops = ref_engine.build_central_operators(g, P)
    out = (ops.Lop @ (X * Y).ravel()).reshape(g.shape)
    cs = CoefficientSet(P)
    exact = cs.cross(Y) + cs.convection_x(Y) * Y + cs.convection_y(Y) * X
    np.testing.assert_allclose(out[1:-1, 1:-1], exact[1:-1, 1:-1], atol=1e-10)


def test_schedule():
    s = ref_engine.rannacher_schedule(5)
    assert s[:4] == [("implicit_euler", 0.5)] * 4
    assert s[4:] == [("crank_nicolson", 1.0)] * 3
    assert sum(f for _, f in s) == pytest.approx(5.0)
    assert ref_engine.rannacher_schedule(1) == [("crank_nicolson", 1.0)]


def _tv(u):
    return np.abs(np.diff(u)).sum()


def test_rannacher_damps_kink_oscillations():
    pr = with_params(PricingProblem(), lam=0.0)
    g = build_grid(4.0, 0.5, 4.5, 0.05, 10.0, 0.5)
    r = ref_engine.solve(pr, g)
    j = g.M // 2
    u0 = np.maximum(1.0 - np.exp(g.x), 0.0)
    assert _tv(r.surface.values[:, j]) <= _tv(u0) + 1e-6


def test_rannacher_irrelevant_for_smooth_data():
    pr = with_params(PricingProblem(), lam=0.0)
    diffs = []
    for c in (0.8, 0.4):
        g = build_grid(4.0, 0.5, 4.5, 0.1, c, 0.5)
        a = ref_engine.solve(pr, g, smoothing=True, rannacher=True).surface.values
        b = ref_engine.solve(pr, g, smoothing=True, rannacher=False).surface.values
        diffs.append(np.abs(a - b).max())
    # O(k^2): halving k shrinks the gap about fourfold
    assert diffs[0] / diffs[1] > 3.0, diffs


def test_uses_trapezoid_by_default():
    g = build_grid(4.0, 0.1, 4.1, 0.4, 0.4, 0.5)
    r = ref_engine.solve(PricingProblem(), g)
    assert r.flags["quadrature"] == "trapezoid"
    assert r.flags["rannacher"]
