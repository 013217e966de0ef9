import json

import numpy as np
import pytest

from svcj_hoc import harness
from svcj_hoc.model import PricingProblem

FAST = dict(h_list=(0.4, 0.2), h_ref=0.1)


@pytest.fixture(scope="module")
def fast_hoc():
    return harness.run_convergence("hoc", **FAST)


def test_fitted_order_recovers_power_law():
    h = np.array([0.4, 0.2, 0.1])
    assert harness.fitted_order(h, 3.0 * h**4) == pytest.approx(4.0)
    assert np.isnan(harness.fitted_order([0.4], [1.0]))


def test_rows_and_metadata(fast_hoc):
    assert [r.h for r in fast_hoc.rows] == [0.4, 0.2]
    assert all(r.eps2 > 0 and r.eps_inf > 0 for r in fast_hoc.rows)
    assert fast_hoc.metadata["error_region"] == "all coincident interior nodes"
    assert fast_hoc.metadata["reference_scheme"] == "hoc"
    assert fast_hoc.metadata["smoothing"] is True


def test_scaled_and_raw_norms(fast_hoc):
    for r in fast_hoc.rows:
        assert r.eps2 == pytest.approx(r.h * r.eps2_raw)


def test_timing_accounting(fast_hoc):
    for r in fast_hoc.rows:
        parts = [r.setup_s, r.factor_s, r.step_s, r.integral_s]
        assert min(parts) >= 0
        assert sum(parts) <= 1.05 * r.total_s


def test_self_reference_is_degenerate():
    rep = harness.run_convergence("ref", h_list=(0.4, 0.1), h_ref=0.1)
    assert rep.rows[-1].eps2 == 0.0 and rep.rows[-1].degenerate
    assert not rep.rows[0].degenerate


def test_non_nested_rejected():
    with pytest.raises(ValueError):
        harness.run_convergence("hoc", h_list=(0.4,), h_ref=0.3 / 2)
    with pytest.raises(ValueError):
        harness.run_convergence("hoc", h_list=(0.4, 0.4), h_ref=0.1)
    with pytest.raises(ValueError):
        harness.run_convergence("fancy", **FAST)


def test_deterministic_errors(fast_hoc):
    again = harness.run_convergence("hoc", **FAST)
    assert [r.eps2 for r in again.rows] == [r.eps2 for r in fast_hoc.rows]


def test_backend_equivalence(fast_hoc):
    direct = harness.run_convergence("hoc", backend="direct", **FAST)
    for a, b in zip(direct.rows, fast_hoc.rows):
        assert abs(a.eps2 - b.eps2) < 1e-9 and abs(a.eps_inf - b.eps_inf) < 1e-9


def test_cross_scheme_reference():
    rep = harness.run_convergence("ref", reference_scheme="hoc", **FAST)
    assert rep.metadata["reference_scheme"] == "hoc"
    assert rep.metadata["reference_smoothing"] is True and rep.metadata["smoothing"] is False


def test_subregion(fast_hoc):
    sub = harness.run_convergence("hoc", region={"x": (-1.0, 1.0), "y": (1.0, 3.0)}, **FAST)
    assert sub.metadata["error_region"] == {"x": (-1.0, 1.0), "y": (1.0, 3.0)}
    for a, b in zip(sub.rows, fast_hoc.rows):
        assert a.eps_inf <= b.eps_inf


def test_outputs(tmp_path, fast_hoc):
    csv_path = tmp_path / "c.csv"
    harness.write_outputs([fast_hoc], csv_path, tmp_path / "c.json", {"k": 1})
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "scheme,h,k,eps2,eps_inf,setup_s,factor_s,step_s,integral_s,total_s"
    assert len(lines) == 3
    payload = json.loads((tmp_path / "c.json").read_text())
    assert payload["config"] == {"k": 1} and payload["reports"][0]["m2"] == fast_hoc.m2
    assert "version" in payload


def test_reuse_reference():
    from svcj_hoc import hoc_engine
    from svcj_hoc.grid import build_grid

    ref = hoc_engine.solve(PricingProblem(), build_grid(h=0.1, c=0.4, T=0.5, **harness.DEFAULT_DOMAIN), smoothing=True)
    a = harness.run_convergence("hoc", reference=ref, **FAST)
    b = harness.run_convergence("hoc", **FAST)
    assert [r.eps2 for r in a.rows] == [r.eps2 for r in b.rows]


def test_full_protocol_rows(efficiency_reports):
    for scheme in ("hoc", "ref"):
        rep = efficiency_reports[scheme]
        assert [r.h for r in rep.rows] == list(harness.DEFAULT_H_LIST)
        assert rep.h_ref == 0.025


@pytest.mark.parametrize("scheme", ["hoc", "ref"])
def test_error_monotone(efficiency_reports, scheme):
    assert efficiency_reports[scheme].errors_monotone()
