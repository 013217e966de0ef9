"""Command-line entry point: ``svcj-hoc {price,converge,bench,mc}``.

Configuration comes from an optional JSON file, overridden by flags.  Unknown
keys are fatal (exit 2); numerical failures exit 3.  Every output embeds the
resolved configuration and the package version.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, harness, hoc_engine, ref_engine
from .grid import build_grid
from .jump_quadrature import BACKENDS, EDGE_MODES, NODE_MODES, QUADRATURES
from .mc_oracle import McConfig, simulate_price
from .model import ConfigError, PricingProblem, problem_from_dict
from .pde import NumericalError

# Pricing needs sigma0 = theta (y0 = 0.04) inside the grid and a tall y-window
# so that variance jumps are not cut off.
PRICE_DOMAIN = dict(R1=4.0, L2=0.02, R2=8.02)
PRICE_H = 0.05
GRID_KEYS = ("R1", "L2", "R2", "h", "c")
MC_KEYS = tuple(f.name for f in fields(McConfig))
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass
class RunConfig:
    problem: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    scheme: str = "hoc"
    quadrature: str | None = None
    backend: str = "fft"
    nodes: str = "coincident"
    edge_mode: str = "full"
    smoothing: bool | None = None
    S0: float | None = None
    sigma0: float | None = None
    seed: int = 12345
    mc: dict = field(default_factory=dict)
    h_list: list = field(default_factory=lambda: list(harness.DEFAULT_H_LIST))
    h_ref: float = harness.DEFAULT_H_REF
    repeats: int = 3
    out: str | None = None

    def validate(self) -> None:
        problem_from_dict(self.problem)
        _check_enum("scheme", self.scheme, tuple(harness.SCHEMES))
        if self.quadrature is not None:
            _check_enum("quadrature", self.quadrature, QUADRATURES)
        _check_enum("backend", self.backend, BACKENDS)
        _check_enum("nodes", self.nodes, NODE_MODES)
        _check_enum("edge_mode", self.edge_mode, EDGE_MODES)
        for k in self.grid:
            if k not in GRID_KEYS:
                raise ConfigError(f"unknown grid key {k!r}; allowed: {', '.join(GRID_KEYS)}")
        for k in self.mc:
            if k not in MC_KEYS or k == "seed":
                raise ConfigError(f"unknown mc key {k!r}; allowed: n_paths, n_steps_per_year, antithetic, batch_size")
        if self.smoothing is not None and not isinstance(self.smoothing, bool):
            raise ConfigError("smoothing must be true, false or null")

    @property
    def pricing_problem(self) -> PricingProblem:
        return problem_from_dict(self.problem)

    def resolved(self) -> dict:
        d = asdict(self)
        d["problem"] = self.pricing_problem.to_json_dict()
        return d


def _check_enum(name, value, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {', '.join(allowed)}, got {value!r}")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for k in data:
        if k not in known:
            raise ConfigError(f"unknown config key {k!r}")
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(data)


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.scheme is not None:
        cfg.scheme = args.scheme
    if args.backend is not None:
        cfg.backend = args.backend
    if args.h is not None:
        if args.command in ("converge", "bench"):
            cfg.h_list = [float(v) for v in args.h]
        else:
            cfg.grid = {**cfg.grid, "h": float(args.h[0])}
    if args.out is not None:
        cfg.out = args.out
    cfg.validate()
    return cfg


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def cmd_price(cfg: RunConfig) -> dict:
    problem = cfg.pricing_problem
    g = {**PRICE_DOMAIN, "h": PRICE_H, "c": harness.DEFAULT_C, **cfg.grid}
    grid = build_grid(T=problem.T, **g)
    S0 = problem.K if cfg.S0 is None else cfg.S0
    sigma0 = problem.params.theta if cfg.sigma0 is None else cfg.sigma0
    smoothing = harness.DEFAULT_SMOOTHING[cfg.scheme] if cfg.smoothing is None else cfg.smoothing
    kw = dict(backend=cfg.backend, nodes=cfg.nodes, edge_mode=cfg.edge_mode, smoothing=smoothing, S0=S0, sigma0=sigma0)
    if cfg.quadrature is not None:
        kw["quadrature"] = cfg.quadrature
    engine = hoc_engine if cfg.scheme == "hoc" else ref_engine
    result = engine.solve(problem, grid, **kw)
    out = result.to_json_dict()
    out["config"] = cfg.resolved()
    _write(json.dumps(out, indent=2), cfg.out)
    return out


def _domain(cfg: RunConfig) -> tuple[dict, float]:
    g = {**harness.DEFAULT_DOMAIN, "c": harness.DEFAULT_C, **cfg.grid}
    g.pop("h", None)
    c = g.pop("c")
    return g, c


def _harness_outputs(reports, cfg: RunConfig, default_name: str):
    csv_path = Path(cfg.out or default_name)
    harness.write_outputs(reports, csv_path, csv_path.with_suffix(".json"), cfg.resolved())
    return csv_path


def cmd_converge(cfg: RunConfig) -> Path:
    domain, c = _domain(cfg)
    rep = harness.run_convergence(
        cfg.scheme,
        cfg.h_list,
        cfg.h_ref,
        cfg.pricing_problem,
        domain=domain,
        c=c,
        smoothing=cfg.smoothing,
        backend=cfg.backend,
        quadrature=cfg.quadrature,
        repeats=1,
    )
    return _harness_outputs([rep], cfg, "converge.csv")


def cmd_bench(cfg: RunConfig) -> Path:
    domain, c = _domain(cfg)
    reps = harness.run_efficiency(
        ("hoc", "ref"),
        cfg.h_list,
        cfg.h_ref,
        cfg.pricing_problem,
        repeats=cfg.repeats,
        domain=domain,
        c=c,
        smoothing=cfg.smoothing,
        backend=cfg.backend,
    )
    return _harness_outputs(reps, cfg, "bench.csv")


def cmd_mc(cfg: RunConfig) -> dict:
    problem = cfg.pricing_problem
    mc = McConfig(seed=cfg.seed, **cfg.mc)
    res = simulate_price(problem, mc, S0=cfg.S0, sigma0=cfg.sigma0)
    out = res.to_json_dict()
    out["config"] = cfg.resolved()
    _write(json.dumps(out, indent=2), cfg.out)
    return out


COMMANDS = {"price": cmd_price, "converge": cmd_converge, "bench": cmd_bench, "mc": cmd_mc}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svcj-hoc", description="SVCJ European put pricing with HOC and reference schemes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "price": "price one option and write JSON",
        "converge": "convergence study for one scheme (CSV plus JSON)",
        "bench": "error and timing rows for both schemes (CSV plus JSON)",
        "mc": "Monte Carlo reference price (JSON)",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--scheme", choices=sorted(harness.SCHEMES))
        p.add_argument("--h", type=float, nargs="+", help="mesh size (list for converge/bench)")
        p.add_argument("--backend", choices=BACKENDS)
        p.add_argument("--out", help="output path (stdout for JSON commands when omitted)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
