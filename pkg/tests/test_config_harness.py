import json
import math
from dataclasses import replace

import numpy as np
import pytest

from stefanlab.config import ConfigError, FrontSpec, MalliavinSpec, ProfileSpec, RunConfig
from stefanlab.cutoff import CutoffParams
from stefanlab.harness import main, run_ensemble, run_single, solve_path
from stefanlab.noise_field import GridSpec

SMALL = RunConfig(grid=GridSpec(12, 48, 1.0, 0.1), cutoff=CutoffParams(T=0.1))


def test_ini_round_trip():
    cfg = replace(SMALL, n_sweep=(1.0, 3.5), outputs=("report", "noise"),
                  front=FrontSpec(-0.1, 0.2, -1.0, 2.0),
                  malliavin=MalliavinSpec(eps=(0.1, 0.2, 0.3, 0.4, 0.5)))
    back = RunConfig.from_ini(cfg.to_ini())
    assert back == cfg and back.digest() == cfg.digest()
    assert RunConfig.from_ini(RunConfig().to_ini()) == RunConfig()


def test_missing_keys_take_defaults():
    cfg = RunConfig.from_ini("[grid]\nnx = 8\n")
    assert cfg.grid.nx == 8 and cfg.grid.nt == RunConfig().grid.nt
    assert cfg.sigma == RunConfig().sigma


def test_every_problem_is_reported():
    text = """
[grid]
nx = 16
nt = 8
[model]
solver = fd
alpha = 1.0
drift = maybe
[sigma]
profile = sine
amplitude = 1
[u0]
profile = unknown
[run]
outputs = report,movie
ensemble_size = 0
[malliavin]
eps = 0.1,0.2
probe = 1.5
[front]
s0_minus = 0.3
s0_plus = 0.1
"""
    with pytest.raises(ConfigError) as info:
        RunConfig.from_ini(text)
    probs = "\n".join(info.value.problems)
    for key in ("drift", "fd solver", "unknown profile", "movie", "ensemble_size", "4 eps",
                "probe", "s0_minus"):
        assert key in probs


def test_profiles_must_vanish_at_walls():
    bad = replace(SMALL, sigma=ProfileSpec("table", 1.0, ""))
    assert any("table" in p for p in bad.problems())
    cfg = replace(SMALL, u0=ProfileSpec("sine", -1.0))
    assert any("nonnegative" in p for p in cfg.problems())


def test_table_profile(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("0,0\n0.5,1\n1,0\n")
    prof = ProfileSpec("table", 2.0, str(f)).build(1.0)
    assert prof(np.array([0.25]))[0] == pytest.approx(1.0)
    assert not replace(SMALL, sigma=ProfileSpec("table", 1.0, str(f))).problems()


def test_bump_profile_support():
    b = ProfileSpec("bump", 1.0).build(2.0)
    x = np.linspace(0, 2, 81)
    v = b(x)
    assert v.max() == pytest.approx(1.0) and np.all(v[np.abs(x - 1) >= 0.5] == 0.0)


def test_zero_config_is_benign(tmp_path):
    cfg = replace(SMALL, sigma=ProfileSpec("zero"), u0=ProfileSpec("zero"))
    rep = run_single(cfg, tmp_path)
    assert rep["passed"] and rep["sup_h_norm_p_localized"] == 0.0
    assert rep["classification"]["in_Omega_M"]


def test_solvers_agree_roughly():
    cfg = replace(SMALL, grid=GridSpec(12, 200, 1.0, 0.1))
    _, a, _ = solve_path(cfg, 3)
    _, b, _ = solve_path(replace(cfg, solver="fd"), 3)
    _, c, info = solve_path(replace(cfg, solver="reflected"), 3)
    assert np.max(np.abs(a.values - b.values)) < 0.05
    assert info["min_u"] >= 0.0


def test_single_artifacts_are_deterministic(tmp_path):
    cfg = replace(SMALL, outputs=("report", "path_csv", "path_bin", "noise", "field", "front",
                                  "density"))
    run_single(cfg, tmp_path / "a", seed=5)
    run_single(cfg, tmp_path / "b", seed=5)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"path.csv", "path.bin", "noise.bin", "field.stmd", "front.csv"} <= set(names)
    for n in names:
        if n != "run_meta.json":
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["provenance"]["config_sha256"] == cfg.digest()


def test_ensemble_small_noise_stays_in_omega(tmp_path):
    cfg = replace(SMALL, sigma=ProfileSpec("sine", 1e-3), ensemble_size=6,
                  cutoff=CutoffParams(n=16, M=50, T=0.1))
    rep = run_ensemble(cfg, out_dir=tmp_path)
    assert rep.omega["fraction_Omega_M"] == 1.0
    assert rep.checks["sweep_monotone"] and rep.checks["no_failures"]
    assert rep.moment["n_paths"] == 6 and math.isfinite(rep.moment["estimate"])
    assert (tmp_path / "ensemble.json").exists()


def test_ensemble_sweep_fractions_monotone():
    cfg = replace(SMALL, sigma=ProfileSpec("sine", 3.0), ensemble_size=8,
                  cutoff=CutoffParams(n=1.0, M=3.0, T=0.1))
    rep = run_ensemble(cfg)
    fr = [s["fraction_Omega_M_n"] for s in rep.omega["sweep"]]
    assert fr == sorted(fr)
    with pytest.raises(ConfigError):
        run_ensemble(replace(cfg, ensemble_size=1))


def test_cli_exit_codes(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text(SMALL.to_ini())
    assert main(["single", "--config", str(ini), "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
    assert "solver" in capsys.readouterr().out
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nnx = -3\n")
    assert main(["single", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    tight = replace(SMALL, k_max=1)
    ini.write_text(tight.to_ini())
    assert main(["single", "--config", str(ini), "--out", str(tmp_path / "f")]) == 1
    assert main(["verify-kernel", "--out", str(tmp_path / "k")]) == 0
