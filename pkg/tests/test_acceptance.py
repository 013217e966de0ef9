"""One check per acceptance criterion; each prints a PASS/FAIL line with the measured values."""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import dblquad

from conftest import ACCEPTANCE_LINES
from svcj_hoc import hoc_engine
from svcj_hoc import jump_quadrature as jq
from svcj_hoc.cli import PRICE_DOMAIN
from svcj_hoc.grid import Surface, build_grid
from svcj_hoc.mc_oracle import McConfig, black_scholes_put, martingale_check, simulate_price
from svcj_hoc.model import PricingProblem, SvcjParams, transformed_density, with_params
from test_jump_quadrature import gauss, gauss_exact

PROBLEM = PricingProblem()


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_convergence_order(efficiency_reports):
    hoc, ref = efficiency_reports["hoc"], efficiency_reports["ref"]
    ok_hoc = 3.5 <= hoc.m2 <= 4.5
    ok_ref = 1.6 <= ref.m2 <= 2.4
    elapsed = efficiency_reports["elapsed_s"]
    report(
        1,
        ok_hoc and ok_ref and elapsed <= 15 * 60,
        f"HOC m2={hoc.m2:.3f} (want [3.5, 4.5]), ref m2={ref.m2:.3f} (want [1.6, 2.4]), "
        f"HOC eps2={[f'{r.eps2:.3e}' for r in hoc.rows]}, run {elapsed:.0f}s",
    )


def test_criterion_2_efficiency_ordering(efficiency_reports):
    hoc, ref = efficiency_reports["hoc"], efficiency_reports["ref"]
    pairs = list(zip(hoc.rows, ref.rows))
    assert [a.h for a, _ in pairs] == [b.h for _, b in pairs]
    more_accurate = all(a.eps2 < b.eps2 for a, b in pairs)
    slower = all(a.total_s > b.total_s for a, b in pairs)
    detail = ", ".join(f"h={a.h}: eps2 {a.eps2:.2e}/{b.eps2:.2e} time {a.total_s:.3f}/{b.total_s:.3f}s" for a, b in pairs)
    report(2, more_accurate and slower, f"HOC/ref {detail}")


def test_criterion_3_oracle_agreement():
    t0 = time.perf_counter()
    g = build_grid(h=0.05, c=0.4, T=PROBLEM.T, **PRICE_DOMAIN)
    pde = hoc_engine.solve(PROBLEM, g, smoothing=True, S0=100.0, sigma0=PROBLEM.params.theta)
    mc = simulate_price(PROBLEM, McConfig(n_paths=1_000_000, n_steps_per_year=512))
    elapsed = time.perf_counter() - t0
    z = abs(pde.price - mc.price) / mc.std_err
    report(3, z <= 3.0 and elapsed <= 300, f"HOC {pde.price:.5f}, MC {mc.price:.5f} +- {mc.std_err:.5f} ({z:.2f} SE), {elapsed:.0f}s")


def test_criterion_4_degenerate_models():
    pr = with_params(PROBLEM, lam=0.0, v=1e-3)
    y0 = pr.params.theta / pr.params.v
    g = build_grid(2.0, y0 - 1.0, y0 + 1.0, 0.025, 0.4, 0.5)
    pde = hoc_engine.solve(pr, g, smoothing=True, S0=100.0)
    bs = black_scholes_put(100.0, 100.0, pr.params.r, math.sqrt(pr.params.theta), pr.T)
    rel = abs(pde.price - bs) / bs
    mart = martingale_check(PROBLEM, McConfig(n_paths=1_000_000))
    z = abs(mart.price - 100.0) / mart.std_err
    report(
        4,
        rel < 1e-3 and z <= 3.0,
        f"BS limit {pde.price:.6f} vs {bs:.6f} (rel {rel:.1e}); e^-rT E[S_T]={mart.price:.4f} +- {mart.std_err:.4f} ({z:.2f} SE)",
    )


_BACKEND_DEVIATIONS = []


@settings(max_examples=20)
@given(arrays(np.float64, (41, 21), elements=st.floats(-1, 1)), st.sampled_from(list(jq.QUADRATURES)))
def _backend_deviation(u, quadrature):
    k = jq.tabulate_kernel(build_grid(4.0, 0.1, 4.1, 0.2, 0.4, 0.5), SvcjParams(), quadrature)
    d = jq.apply_direct(k, Surface(u, k.grid)).values
    f = jq.apply_fft(k, Surface(u, k.grid)).values
    _BACKEND_DEVIATIONS.append(np.abs(f - d).max() / max(np.abs(d).max(), 1e-300))


def test_criterion_5_quadrature():
    h_list = [0.4, 0.2, 0.1, 0.05]
    s_simp, _ = jq.simpson_error_order_probe(gauss, gauss_exact(), h_list)
    s_trap, _ = jq.simpson_error_order_probe(gauss, gauss_exact(), h_list, quadrature="trapezoid")
    P = SvcjParams()
    mass = dblquad(lambda e, z: transformed_density(z, e, P), -4.0, 4.0, 0.0, 4.0, epsabs=1e-13)[0]
    _BACKEND_DEVIATIONS.clear()
    _backend_deviation()
    dev = max(_BACKEND_DEVIATIONS)
    ok = abs(s_simp - 4) <= 0.3 and abs(s_trap - 2) <= 0.3 and 0.99 <= mass <= 1 + 1e-6 and dev <= 1e-10
    report(5, ok, f"Simpson slope {s_simp:.3f}, trapezoid slope {s_trap:.3f}, kernel mass {mass:.6f}, direct/FFT max rel dev {dev:.1e}")
