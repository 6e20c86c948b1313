import csv
import json
import math
from pathlib import Path

import pytest
import yaml

from triladder.cli import main
from triladder.config import ConfigError, ExperimentConfig, default_config_text, spawn_seeds
from triladder.fock import DEVICE_J, DEVICE_U


def write_config(tmp_path: Path, name="cfg.yaml", **changes) -> Path:
    data = yaml.safe_load(default_config_text())
    for key, value in changes.items():
        data[key] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def data_rows(path: Path) -> list[dict]:
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def test_default_config_units():
    cfg = ExperimentConfig.load()
    assert cfg.j[0] == pytest.approx(DEVICE_J)
    assert cfg.u[0] == pytest.approx(DEVICE_U)
    assert cfg.sweep == (-3.56, -2.02, -1.22, 0.98, 1.96, 3.53)
    assert cfg.schedule().initial == (1, 0, 0, 1, 1, 0, 0, 1)
    assert cfg.ramp_dt == pytest.approx(0.2e-9)
    spec = cfg.spec(-1.22)
    assert spec.flux == pytest.approx(math.pi) and spec.j_leg[0] == pytest.approx(1.22 * DEVICE_J)
    assert cfg.spec(0.98).flux == 0.0
    bond = cfg.plans[1]
    assert bond.rungs == (0, 2, 4, 6) and bond.delta == pytest.approx(2 * math.pi * 10e6)
    assert len(cfg.plans[0].expand(7)) == 15


def test_schema_errors_name_the_field():
    data = yaml.safe_load(default_config_text())
    data["lattice"]["n_sites"] = "eight"
    with pytest.raises(ConfigError, match="lattice/n_sites"):
        ExperimentConfig.from_dict(data)
    data = yaml.safe_load(default_config_text())
    data["schema_version"] = 2
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)
    data = yaml.safe_load(default_config_text())
    data["sweep"] = [0.0]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_digest_ignores_output_location():
    cfg = ExperimentConfig.load()
    assert cfg.digest() == cfg.replace_raw(output="elsewhere").digest()
    assert cfg.digest() != cfg.replace_raw(seed=1).digest()


def test_seeds_are_stable():
    assert spawn_seeds(5, 3) == spawn_seeds(5, 3)
    assert spawn_seeds(5, 3)[:2] == spawn_seeds(5, 2)
    assert len(set(spawn_seeds(5, 100))) == 100


def test_verify_reports_noise_invariant(tmp_path, capsys):
    cfg = write_config(tmp_path, noise={"t1_us": 10.0, "t2r_us": 25.0})
    code, out, _ = run(["verify", "--config", cfg], capsys)
    assert code == 1
    summary = json.loads(out.strip().splitlines()[-1])
    assert not summary["ok"] and "NoiseModel invariant violated" in summary["error"]


def test_verify_reports_overlapping_pair(tmp_path, capsys):
    cfg = write_config(tmp_path, plans=[{"kind": "current_correlation", "rungs": [2, 3], "shots": 100}])
    code, out, _ = run(["verify", "--config", cfg, "--only", "config_plans"], capsys)
    assert code == 1
    assert "non-measurable pair" in out


def test_empty_sweep_writes_nothing(tmp_path, capsys):
    out_dir = tmp_path / "out"
    cfg = write_config(tmp_path, sweep=[])
    code, out, _ = run(["sweep", "--config", cfg, "--out", out_dir], capsys)
    assert code == 0
    assert json.loads(out)["n_files"] == 0
    assert not out_dir.exists() or not any(out_dir.iterdir())


def test_single_point_correlation_table(tmp_path, capsys):
    out_dir = tmp_path / "out"
    cfg = write_config(tmp_path, sweep=[-1.22],
                       plans=[{"kind": "current_correlation", "rungs": "all", "shots": 2000}])
    code, _, _ = run(["sweep", "--config", cfg, "--out", out_dir], capsys)
    assert code == 0
    rows = data_rows(out_dir / "g_m1.22.csv")
    assert len(rows) == 15
    assert {(int(r["rung_i"]), int(r["rung_j"])) for r in rows} == {(i, j) for i in range(1, 8)
                                                                      for j in range(i + 2, 8)}
    assert all(float(r["stderr"]) > 0 for r in rows)
    assert len(list((out_dir / "shots" / "m1.22").glob("plan*.csv"))) == 15


def test_runs_are_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, sweep=[-1.22, 0.98])
    for name in ("a", "b"):
        assert run(["sweep", "--config", cfg, "--out", tmp_path / name], capsys)[0] == 0
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) > 10
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    assert run(["sweep", "--config", cfg, "--out", tmp_path / "c", "--seed", "7"], capsys)[0] == 0
    assert (tmp_path / "c" / "g_m1.22.csv").read_bytes() != (tmp_path / "a" / "g_m1.22.csv").read_bytes()


def test_ground_command(tmp_path, capsys):
    code, out, _ = run(["ground", "--ratio", "-1.22", "--out", tmp_path], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["bond_order"] == pytest.approx(2.76790, abs=1e-4)
    assert (tmp_path / "ground_m1.22.json").exists()


def test_ramp_command(capsys):
    code, out, _ = run(["ramp", "--ratio", "-1.22", "--dt-ns", "1.0", "--slowdown", "0.2"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["duration_ns"] == pytest.approx(60.0)
    assert 0 < data["fidelity"] < 1


def test_measure_command_infinite_shots(tmp_path, capsys):
    code, out, _ = run(["measure", "--ratio", "0.98", "--shots", "inf", "--out", tmp_path], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["chiral_c_est"] == pytest.approx(data["chiral_c"], abs=1e-10)
    assert data["bond_order_est"] == pytest.approx(data["bond_order"], abs=1e-10)


def test_figures_command(tmp_path, capsys):
    cfg = write_config(tmp_path, sweep=[-1.22])
    code, out, _ = run(["figures", "--config", cfg, "--out", tmp_path / "o"], capsys)
    assert code == 0
    names = sorted(Path(p).name for p in json.loads(out)["figures"])
    assert names == ["bonds_m1.22.svg", "distance_m1.22.svg", "heatmap_m1.22.svg"]


def test_errors_exit_nonzero(tmp_path, capsys):
    code, _, err = run(["ground", "--config", tmp_path / "missing.yaml"], capsys)
    assert code == 1 and err.startswith("error:")
    with pytest.raises(SystemExit):
        main(["sweep", "--shots", "0"])
