import json
import os

import numpy as np
import pytest

from bohmstab import cli
from bohmstab.config import (ExperimentConfig, default_phases, parse_grid_spec,
                             parse_model_token, parse_neq, parse_schedule)
from bohmstab.csvio import CSV_VERSION_LINE, read_csv, write_csv
from bohmstab.errors import ConfigError


def test_config_round_trip_default():
    cfg = ExperimentConfig()
    text = cfg.dumps()
    again = ExperimentConfig.loads(text)
    assert again.dumps() == text


def test_config_round_trip_mutated(tmp_path):
    cfg = ExperimentConfig()
    cfg.kernel.kind = "lorentzian"
    cfg.kernel.mu = 0.37
    cfg.ensemble.neq = "offset:1.5"
    cfg.run.seed = 991
    path = tmp_path / "exp.cfg"
    cfg.to_file(path)
    again = ExperimentConfig.from_file(path)
    assert again.dumps() == cfg.dumps()
    assert again.kernel.mu == 0.37


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("[warp]\nspeed = 9\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("[kernel]\nwidth = 1.0\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("[kernel]\nmu = wide\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("[kernel]\nkind = triangle\n")


def test_parse_neq_grammar():
    assert parse_neq("none") is None
    assert parse_neq("born").momentum_law == "kernel"
    off = parse_neq("offset:1.25")
    assert off.momentum_law == "offset" and off.delta == 1.25
    wid = parse_neq("width:0.5")
    assert wid.mu_actual == 0.5
    ind = parse_neq("independent:0.3,2.0")
    assert ind.independent_mean == 0.3 and ind.independent_sigma == 2.0
    with pytest.raises(ConfigError):
        parse_neq("offset")
    with pytest.raises(ConfigError):
        parse_neq("independent:1")


def test_parse_grid_and_schedule():
    grid = parse_grid_spec("-6,6,30,-5,5,25")
    assert grid.nx == 30 and grid.n_p == 25 and grid.p_max == 5
    with pytest.raises(ConfigError):
        parse_grid_spec("-6,6,30")
    times = parse_schedule("0:20:11")
    assert times.size == 11 and times[-1] == 20.0
    with pytest.raises(ConfigError):
        parse_schedule("0-20-11")


def test_parse_model_token():
    cfg = parse_model_token("superposition:4")
    assert cfg.kind == "superposition" and cfg.modes == 4
    cfg = parse_model_token("grid:psi.csv")
    assert cfg.kind == "grid" and cfg.file == "psi.csv"
    with pytest.raises(ConfigError):
        parse_model_token("plane-wave")


def test_default_phases_fixed():
    assert np.allclose(default_phases(3), [0.0, 1.2, 3.8])
    assert default_phases(6).shape == (6,)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    cols = {"t": np.linspace(0, 1, 5), "x": np.arange(5.0)}
    write_csv(path, cols)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_VERSION_LINE
    back = read_csv(path)
    assert np.array_equal(back["t"], cols["t"])
    assert np.array_equal(back["x"], cols["x"])


def test_csv_rejects_missing_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x\n0,1\n")
    with pytest.raises(ValueError):
        read_csv(path)


def _run(args):
    return cli.main(args)


def test_cli_trajectory_deterministic(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    base = ["trajectory", "--law", "modified", "--x0", "1.0", "--v0", "0.25",
            "--t-end", "2.0", "--dt", "0.001", "--store-stride", "10"]
    assert _run(base + ["--out", str(out1)]) == 0
    assert _run(base + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    data = read_csv(out1)
    assert set(data) == {"t", "x", "p"}
    assert data["t"][-1] == pytest.approx(2.0)
    assert os.path.exists(str(out1) + ".json")


def test_cli_trajectory_debroglie(tmp_path):
    out = tmp_path / "g.csv"
    assert _run(["trajectory", "--law", "debroglie", "--x0", "1.0",
                 "--t-end", "1.0", "--dt", "0.001", "--out", str(out)]) == 0
    data = read_csv(out)
    assert data["x"][-1] == pytest.approx(np.cos(1.0), abs=1e-6)


def test_cli_stability_columns(tmp_path):
    out = tmp_path / "s.csv"
    assert _run(["stability", "--t-end", "1.0", "--dt", "0.002",
                 "--out", str(out)]) == 0
    data = read_csv(out)
    assert set(data) == {"t", "x_mod_vplus", "x_mod_vminus", "x_bohm_vplus",
                         "x_bohm_vminus", "x_center", "sigma"}
    assert data["x_center"][0] == pytest.approx(1.0)
    assert data["sigma"][0] == pytest.approx(1.0 / np.sqrt(2.0))


def test_cli_stability_zero_time(tmp_path):
    out = tmp_path / "s0.csv"
    assert _run(["stability", "--t-end", "0", "--out", str(out)]) == 0
    data = read_csv(out)
    assert data["t"].size == 1
    for col in ("x_mod_vplus", "x_mod_vminus", "x_bohm_vplus",
                "x_bohm_vminus"):
        assert data[col][0] == pytest.approx(1.0)


def test_cli_ensemble_with_sidecar(tmp_path):
    out = tmp_path / "e.csv"
    assert _run(["ensemble", "--n", "2000", "--seed", "5", "--neq",
                 "offset:1.0", "--t-end", "0.5", "--dt", "0.005",
                 "--out", str(out)]) == 0
    data = read_csv(out)
    assert data["x"].size == 2000
    sidecar = json.loads((tmp_path / "e.csv.json").read_text())
    assert sidecar["seed"] == 5
    assert sidecar["momentum_law"] == "offset"
    assert "truncated_count" in sidecar


def test_cli_ensemble_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["ensemble", "--n", "500", "--seed", "7", "--t-end", "0"]
    assert _run(args + ["--out", str(a)]) == 0
    assert _run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_relax_small(tmp_path):
    out = tmp_path / "r.csv"
    assert _run(["relax", "--model", "coherent", "--n", "5000", "--seed",
                 "3", "--grid=-6,6,20,-6,6,20", "--times", "0:0.5:2",
                 "--dt", "0.005", "--out", str(out)]) == 0
    data = read_csv(out)
    assert set(data) == {"t", "hbar", "hbar_floor", "out_of_range_mass"}
    assert data["t"].size == 2
    assert np.all(np.abs(data["hbar"]) <= data["hbar_floor"])


def test_cli_rejects_bad_neq(tmp_path):
    assert _run(["ensemble", "--n", "10", "--neq", "sideways:2",
                 "--out", str(tmp_path / "x.csv")]) == 2


def test_cli_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("BOHMSTAB_SEED", "31415")
    out = tmp_path / "env.csv"
    assert _run(["ensemble", "--n", "100", "--t-end", "0",
                 "--out", str(out)]) == 0
    sidecar = json.loads((tmp_path / "env.csv.json").read_text())
    assert sidecar["seed"] == 31415


def test_cli_config_file(tmp_path):
    cfg = ExperimentConfig()
    cfg.trajectory.t_end = 1.0
    cfg.trajectory.store_stride = 50
    path = tmp_path / "exp.cfg"
    cfg.to_file(path)
    out = tmp_path / "c.csv"
    assert _run(["trajectory", "--config", str(path), "--out", str(out)]) == 0
    assert read_csv(out)["t"][-1] == pytest.approx(1.0)
