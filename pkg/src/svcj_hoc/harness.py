"""Convergence and efficiency experiments.

Errors are measured against a fine-grid solution of the same scheme (or of
another scheme when ``reference_scheme`` is given), on the coincident interior
nodes of each coarse grid at maturity.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, hoc_engine, ref_engine
from .grid import GridSpec, build_grid, nesting_stride, restrict
from .model import PricingProblem
from .pde import PriceResult

DEFAULT_H_LIST = (0.4, 0.2, 0.1, 0.05)
DEFAULT_H_REF = 0.025
DEFAULT_DOMAIN = dict(R1=4.0, L2=0.1, R2=4.1)
DEFAULT_C = 0.4
CSV_HEADER = ("scheme", "h", "k", "eps2", "eps_inf", "setup_s", "factor_s", "step_s", "integral_s", "total_s")
TIMING_KEYS = ("setup_s", "factor_s", "step_s", "integral_s", "total_s")
SCHEMES = {"hoc": hoc_engine.solve, "ref": ref_engine.solve}
# payoff smoothing is the HOC start-up remedy; the reference scheme relies on Rannacher steps
DEFAULT_SMOOTHING = {"hoc": True, "ref": False}


@dataclass
class ConvergenceRow:
    scheme: str
    h: float
    k: float
    eps2: float
    eps2_raw: float
    eps_inf: float
    setup_s: float
    factor_s: float
    step_s: float
    integral_s: float
    total_s: float
    degenerate: bool = False


@dataclass
class ConvergenceReport:
    scheme: str
    rows: list[ConvergenceRow]
    h_ref: float
    m2: float
    m2_raw: float
    m_inf: float
    metadata: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        return rows_to_csv(self.rows)

    def to_json_dict(self) -> dict:
        return {
            "version": __version__,
            "scheme": self.scheme,
            "h_ref": self.h_ref,
            "m2": self.m2,
            "m2_raw": self.m2_raw,
            "m_inf": self.m_inf,
            "rows": [asdict(r) for r in self.rows],
            "metadata": self.metadata,
        }

    def errors_monotone(self) -> bool:
        e = [r.eps2 for r in self.rows]
        return all(a > b for a, b in zip(e, e[1:]))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.scheme] + [repr(float(getattr(r, c))) for c in CSV_HEADER[1:]])
    return buf.getvalue()


def fitted_order(h, eps) -> float:
    """Least-squares slope of log(eps) against log(h); NaN with fewer than two usable rows."""
    h = np.asarray(h, float)
    eps = np.asarray(eps, float)
    ok = eps > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(eps[ok]), 1)[0])


def region_mask(grid: GridSpec, region: dict | None = None) -> np.ndarray:
    """Interior nodes, optionally restricted to ``{"x": (lo, hi), "y": (lo, hi)}``."""
    m = np.zeros(grid.shape, dtype=bool)
    m[1:-1, 1:-1] = True
    if region:
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        for axis, coord in (("x", X), ("y", Y)):
            if axis in region:
                lo, hi = region[axis]
                m &= (coord >= lo - 1e-12) & (coord <= hi + 1e-12)
        extra = set(region) - {"x", "y"}
        if extra:
            raise ValueError(f"unknown region keys {sorted(extra)}")
    return m


def grid_errors(coarse: PriceResult | np.ndarray, reference, coarse_grid: GridSpec, region: dict | None = None) -> tuple[float, float, float]:
    """(scaled l2, raw l2, max) differences on coincident interior nodes."""
    u = coarse.surface.values if isinstance(coarse, PriceResult) else coarse
    r = restrict(reference.surface, coarse_grid).values
    d = (u - r)[region_mask(coarse_grid, region)]
    raw = float(np.sqrt(np.sum(d * d)))
    return coarse_grid.h * raw, raw, float(np.max(np.abs(d))) if d.size else 0.0


def _check_h_list(h_list, h_ref, domain, c, T) -> list[float]:
    h_list = sorted((float(h) for h in h_list), reverse=True)
    if len(set(h_list)) != len(h_list):
        raise ValueError("h_list contains duplicates")
    fine = build_grid(h=h_ref, c=c, T=T, **domain)
    for h in h_list:
        nesting_stride(fine, build_grid(h=h, c=c, T=T, **domain))
    return h_list


def _solve(scheme: str, problem, grid, smoothing, backend, quadrature):
    kw = dict(backend=backend, smoothing=smoothing)
    if quadrature is not None:
        kw["quadrature"] = quadrature
    return SCHEMES[scheme](problem, grid, **kw)


def _timed(scheme, problem, grid, smoothing, backend, quadrature, repeats):
    runs = [_solve(scheme, problem, grid, smoothing, backend, quadrature) for _ in range(max(1, repeats))]
    timings = {k: statistics.median(r.timings[k] for r in runs) for k in TIMING_KEYS}
    return runs[0], timings


def run_convergence(
    scheme: str = "hoc",
    h_list=DEFAULT_H_LIST,
    h_ref: float = DEFAULT_H_REF,
    problem: PricingProblem | None = None,
    domain: dict | None = None,
    c: float = DEFAULT_C,
    smoothing: bool | None = None,
    backend: str = "fft",
    quadrature: str | None = None,
    reference_scheme: str | None = None,
    repeats: int = 1,
    reference: PriceResult | None = None,
    region: dict | None = None,
) -> ConvergenceReport:
    """Errors of ``scheme`` on each mesh against a fine-mesh solution.

    ``smoothing=None`` picks the scheme's default start-up treatment.
    ``reference`` lets callers reuse an already computed fine solution, and
    ``region`` restricts the error norms to a box of the domain.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    ref_smoothing = DEFAULT_SMOOTHING[reference_scheme or scheme] if smoothing is None else smoothing
    if smoothing is None:
        smoothing = DEFAULT_SMOOTHING[scheme]
    problem = problem or PricingProblem()
    domain = dict(domain or DEFAULT_DOMAIN)
    ref_scheme = reference_scheme or scheme
    h_list = _check_h_list(h_list, h_ref, domain, c, problem.T)
    fine = build_grid(h=h_ref, c=c, T=problem.T, **domain)
    if reference is None:
        reference = _solve(ref_scheme, problem, fine, ref_smoothing, backend, quadrature if ref_scheme == scheme else None)
    elif not reference.grid.same_domain(fine) or abs(reference.grid.h - h_ref) > 1e-12:
        raise ValueError("supplied reference does not match h_ref and domain")

    rows = []
    for h in h_list:
        g = build_grid(h=h, c=c, T=problem.T, **domain)
        res, t = _timed(scheme, problem, g, smoothing, backend, quadrature, repeats)
        e2, raw, einf = grid_errors(res, reference, g, region)
        rows.append(ConvergenceRow(scheme, h, g.k, e2, raw, einf, degenerate=(e2 == 0.0), **t))
    hs = [r.h for r in rows]
    meta = {
        "problem": problem.to_json_dict(),
        "domain": domain,
        "c": c,
        "smoothing": smoothing,
        "backend": backend,
        "quadrature": quadrature or ("simpson" if scheme == "hoc" else "trapezoid"),
        "reference_scheme": ref_scheme,
        "reference_smoothing": ref_smoothing,
        "error_region": region or "all coincident interior nodes",
        "timing": f"median of {max(1, repeats)} runs",
    }
    return ConvergenceReport(
        scheme,
        rows,
        h_ref,
        fitted_order(hs, [r.eps2 for r in rows]),
        fitted_order(hs, [r.eps2_raw for r in rows]),
        fitted_order(hs, [r.eps_inf for r in rows]),
        meta,
    )


def run_efficiency(
    schemes=("hoc", "ref"),
    h_list=DEFAULT_H_LIST,
    h_ref: float = DEFAULT_H_REF,
    problem: PricingProblem | None = None,
    repeats: int = 3,
    **kwargs,
) -> list[ConvergenceReport]:
    """One convergence report per scheme with median-of-``repeats`` timings."""
    return [run_convergence(s, h_list, h_ref, problem, repeats=repeats, **kwargs) for s in schemes]


def efficiency_rows(reports) -> list[ConvergenceRow]:
    return [r for rep in reports for r in rep.rows]


def write_outputs(reports, csv_path, json_path=None, config: dict | None = None) -> None:
    """CSV of all rows plus a JSON companion with orders and the config echo."""
    reports = list(reports)
    with open(csv_path, "w", newline="") as f:
        f.write(rows_to_csv(efficiency_rows(reports)))
    if json_path is not None:
        payload = {"version": __version__, "config": config or {}, "reports": [r.to_json_dict() for r in reports]}
        with open(json_path, "w") as f:
            json.dump(payload, f, indent=2)
