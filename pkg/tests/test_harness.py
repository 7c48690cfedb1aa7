import json
import math

import numpy as np
import pytest

from hmmwave.fd_core import PeriodicGrid
from hmmwave.harness import cli, config as cfgmod, experiments as ex, metrics, output


# ---- config

def test_parse_config_text():
    text = """
    # comment
    macro.H = 1/80
    kernel.space = poly(9,9)   # kept as a string
    solvers = hmm, dns
    cache.dedup = false
    micro.cells_per_eps = 32
    """
    v = cfgmod.parse_config_text(text)
    assert v["macro.H"] == pytest.approx(1 / 80)
    assert v["kernel.space"] == "poly(9,9)"
    assert v["solvers"] == ["hmm", "dns"]
    assert v["cache.dedup"] is False
    assert v["micro.cells_per_eps"] == 32


@pytest.mark.parametrize("bad", ["no equals sign", "9key = 1", "a..b = 2"])
def test_parse_errors(bad):
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse_config_text(bad)


def test_resolve_precedence():
    cfg = cfgmod.resolve("example1", {"macro.T": 0.5, "field.eps": 0.02}, {"field.eps": 0.04})
    assert cfg["macro.T"] == 0.5
    assert cfg.eps == 0.04
    assert cfg["kernel.space"] == "poly(5,6)"  # from the profile
    paper = cfgmod.resolve("example1", overrides={"profile": "paper"})
    assert paper.eps == 0.01 and paper["macro.H"] == 0.01


@pytest.mark.parametrize(
    "override",
    [{"macro.H": -1.0}, {"kernel.space": "gauss"}, {"solvers": ["hmm", "fem"]}, {"field.dim": 4}, {"profile": "huge"}],
)
def test_validation(override):
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.resolve("example1", overrides=override)


def test_unknown_experiment():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.resolve("example9")


def test_digest_tracks_values():
    a = cfgmod.resolve("example1")
    b = cfgmod.resolve("example1", overrides={"macro.T": 0.9})
    assert a.digest() == cfgmod.resolve("example1").digest()
    assert a.digest() != b.digest()


def test_profiles_build():
    for name in ("example1", "example2", "example3", "example4", "example5", "example6"):
        for profile in ("paper", "desk"):
            cfg = cfgmod.resolve(name, overrides={"profile": profile})
            field = cfgmod.build_field(cfg)
            assert field.dimension == int(cfg["field.dim"])
            cfgmod.micro_params(cfg, field)


# ---- metrics

def test_grid_error_examples():
    u = np.linspace(0, 1, 10)
    assert metrics.grid_error(u, u) == 0.0
    assert metrics.grid_error(u, u + 0.3) == pytest.approx(0.3)
    grid = PeriodicGrid.unit(10)
    assert metrics.grid_error(np.ones(10), np.zeros(10), "l2", grid) == pytest.approx(1.0)
    g2 = PeriodicGrid.unit(8, 2)
    assert metrics.grid_error(np.ones((8, 8)), np.zeros((8, 8)), "l2", g2) == pytest.approx(1.0)
    with pytest.raises(metrics.GridMismatch):
        metrics.grid_error(np.ones(10), np.ones(11))
    with pytest.raises(ValueError):
        metrics.grid_error(u, u, "h1")


def test_loglog_slope():
    x = np.array([2.0, 4.0, 8.0])
    assert metrics.loglog_slope(x, 3 * x**-2.5) == pytest.approx(-2.5)


# ---- output

def test_atomic_write_and_records(tmp_path):
    w = output.ResultWriter(tmp_path)
    p = w.snapshot("demo", 0.5, np.arange(6.0).reshape(2, 3))
    lines = p.read_text().splitlines()
    assert lines[0] == "t,i0,i1,u" and len(lines) == 7
    rec = ex.ResultRecord("demo", {"H": 0.1}, {"linf": 0.2}, 3, 1.0)
    w.records([rec])
    w.summary({"a": np.float64(1.5)})
    assert json.loads((tmp_path / "summary.json").read_text())["a"] == 1.5
    assert not list(tmp_path.rglob("*.tmp*"))


def test_result_record_rejects_bad_metrics():
    with pytest.raises(ex.ExperimentError):
        ex.ResultRecord("x", {}, {"linf": float("nan")})
    with pytest.raises(ex.ExperimentError):
        ex.ResultRecord("x", {}, {"linf": -1.0})


# ---- experiments

def test_example6_refuses_dns():
    with pytest.raises(ex.ExperimentError, match="refused"):
        ex.run_example("example6", {"solvers": ["hmm", "dns"]}, write=False)


def test_longtime_guards():
    cfg = cfgmod.resolve("longtime", overrides={"kernel.space": "poly(1,9)"})
    with pytest.raises(ex.ExperimentError):
        ex.run_longtime(cfg, write=False)
    cfg = cfgmod.resolve("longtime", overrides={"micro.eta_over_eps": 1.5})
    with pytest.raises(ex.ExperimentError):
        ex.run_longtime(cfg, write=False)


def test_micro_solve_count_audit(tmp_path):
    over = {"field.form": "locally_periodic1d", "macro.H": 0.1, "macro.T": 0.1, "field.eps": 0.05,
            "micro.eta_over_eps": 2, "micro.cells_per_eps": 16, "kernel.space": "poly(5,6)", "solvers": ["hmm"]}
    _, summary = ex.run_example("custom", over, out_dir=tmp_path)
    assert summary["micro_solves"] == 10  # d = 1, ten distinct faces
    assert len(summary["config_hash"]) == 16
    over2 = dict(over, **{"field.form": "periodic1d", "field.dim": 2, "micro.k_over_h": 0.3})
    _, s2 = ex.run_example("custom", over2, write=False)
    assert s2["micro_solves"] == 2  # one shared point, two basis slopes


# ---- CLI

def _run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_cli_run_example1(tmp_path, capsys):
    code, out = _run(["run", "example1", "--out", str(tmp_path), "--emit-plot-data"], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "linf_hmm_hom" in summary["metrics"]
    assert (tmp_path / "records.csv").exists()
    assert (tmp_path / "fig_example1.csv").exists()
    assert any(p.name.startswith("example1_hmm_") for p in (tmp_path / "snapshots").iterdir())


def test_cli_is_deterministic(tmp_path, capsys):
    args = ["run", "example1", "--set", "solvers=hmm,hom", "--set", "macro.T=0.2"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_cli_kernels_verify(capsys):
    code, out = _run(["kernels", "--verify"], capsys)
    assert code == 0
    assert "NO" not in out.out and "poly(9,9)" in out.out


def test_cli_flux(capsys):
    code, out = _run(["flux", "--point", "0", "--p", "1", "--set", "kernel.space=poly(9,9)", "--set", "field.eps=0.01"],
                     capsys)
    assert code == 0
    assert float(out.out.split()[0]) == pytest.approx(math.sqrt(0.21), abs=1e-4)


def test_cli_config_file_and_errors(tmp_path, capsys):
    conf = tmp_path / "bad.cfg"
    conf.write_text("macro.H = -2\n")
    code, out = _run(["run", "example1", "--config", str(conf), "--out", str(tmp_path)], capsys)
    assert code == 2 and "configuration error" in out.err
    assert not (tmp_path / "summary.json").exists()
    code, out = _run(["run", "example1", "--set", "nonsense"], capsys)
    assert code == 2
    code, out = _run(["run", "example6", "--set", "solvers=hmm,dns", "--out", str(tmp_path)], capsys)
    assert code == 1 and "refused" in out.err
