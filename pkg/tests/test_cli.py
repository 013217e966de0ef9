import json

import pytest

from svcj_hoc import __version__, hoc_engine
from svcj_hoc.cli import PRICE_DOMAIN, main
from svcj_hoc.grid import build_grid
from svcj_hoc.model import PricingProblem, with_params


def run(tmp_path, argv, config=None):
    if config is not None:
        cfg = tmp_path / "cfg.json"
        cfg.write_text(config if isinstance(config, str) else json.dumps(config))
        argv = argv + ["--config", str(cfg)]
    return main(argv)


def test_price_defaults(tmp_path):
    out = tmp_path / "p.json"
    assert run(tmp_path, ["price", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["price"] > 0 and d["version"] == __version__
    assert d["grid"]["h"] == 0.05 and d["config"]["problem"]["lambda"] == 0.2


def test_price_lambda_zero_matches_engine(tmp_path):
    out = tmp_path / "p.json"
    assert run(tmp_path, ["price", "--h", "0.1", "--out", str(out)], {"problem": {"lambda": 0.0}}) == 0
    d = json.loads(out.read_text())
    pr = with_params(PricingProblem(), lam=0.0)
    g = build_grid(h=0.1, c=0.4, T=0.5, **PRICE_DOMAIN)
    assert d["price"] == hoc_engine.solve(pr, g, smoothing=True, S0=100.0, sigma0=0.01).price


@pytest.mark.parametrize(
    "config,needle",
    [
        ({"sheme": "hoc"}, "sheme"),
        ({"problem": {"kapa": 2}}, "kapa"),
        ({"grid": {"R3": 1}}, "R3"),
        ({"backend": "gpu"}, "backend"),
        ("{not json", "malformed"),
        ({"grid": {"h": 0.3}}, "nearest valid h"),
    ],
)
def test_config_errors(tmp_path, capsys, config, needle):
    assert run(tmp_path, ["price"], config) == 2
    assert needle in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"problem": {"lambda": 0.0, "v": 0.001}, "grid": {"R1": 2.0, "L2": 8.0, "R2": 12.0, "h": 0.1}}
    assert run(tmp_path, ["price"], cfg) == 3
    assert "diverged" in capsys.readouterr().err


def test_mc_deterministic(tmp_path):
    cfg = {"mc": {"n_paths": 20000, "batch_size": 10000}, "seed": 5}
    a = tmp_path / "a.json"
    assert run(tmp_path, ["mc", "--out", str(a)], cfg) == 0
    first = a.read_text()
    assert run(tmp_path, ["mc", "--out", str(a)], cfg) == 0
    assert a.read_text() == first
    d = json.loads(a.read_text())
    assert d["config"]["seed"] == 5 and d["version"] == __version__


def test_converge_defaults(tmp_path):
    out = tmp_path / "conv.csv"
    assert run(tmp_path, ["converge", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 5
    assert [float(l.split(",")[1]) for l in lines[1:]] == [0.4, 0.2, 0.1, 0.05]
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["config"]["scheme"] == "hoc" and "version" in meta


def test_bench_defaults(tmp_path):
    out = tmp_path / "bench.csv"
    assert run(tmp_path, ["bench", "--out", str(out)], {"repeats": 1}) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 8
    assert sorted({r.split(",")[0] for r in rows}) == ["hoc", "ref"]


def test_converge_custom_meshes(tmp_path):
    out = tmp_path / "c.csv"
    assert run(tmp_path, ["converge", "--scheme", "ref", "--h", "0.4", "0.2", "--backend", "direct", "--out", str(out)], {"h_ref": 0.1}) == 0
    assert len(out.read_text().splitlines()) == 3
