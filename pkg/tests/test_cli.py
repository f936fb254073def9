import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from atomguide.cli import execute, format_csv, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
REDUCED = (CONFIGS / "split_run_reduced.toml").read_text()


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return meta, body[0].split(","), [row.split(",") for row in body[1:]]


def few_levels(text, n=4):
    return text + f"max_states = {n}\n"


def test_format_csv_is_exact():
    text = format_csv(["a", "b"], [(1, 0.1), (2, 1 / 3)], {"k": 2.5})
    assert text == "# k = 2.5\na,b\n1,0.1\n2,0.3333333333333333\n"


def test_eigen_writes_one_row_per_level(tmp_path):
    cfg = write(tmp_path, REDUCED.replace('"split-run"', '"eigen"') + "max_states = 100\n")
    out = tmp_path / "out"
    assert execute("eigen", cfg, out) == 0
    meta, header, rows = read_csv(out / "eigen.csv")
    assert header == ["nu", "energy_J", "energy_uK"]
    assert len(rows) == 100
    energies = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(energies) > 0) and energies[-1] < 0
    assert any(m.startswith("# guide.depth_vertical") for m in meta)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["info"]["levels"] == 100
    assert manifest["outputs"]["eigen.csv"]


def test_split_run_and_cache(tmp_path):
    cfg = write(tmp_path, few_levels(REDUCED))
    out = tmp_path / "out"
    assert execute("split-run", cfg, out) == 0
    first = {n: (out / n).read_bytes() for n in ("efficiency.csv", "levels.csv")}
    m1 = json.loads((out / "manifest.json").read_text())
    assert m1["info"]["cache_hit"] is False
    assert execute("split-run", cfg, out) == 0
    m2 = json.loads((out / "manifest.json").read_text())
    assert m2["info"]["cache_hit"] is True
    for name, data in first.items():
        assert (out / name).read_bytes() == data
    assert m1["outputs"] == m2["outputs"]
    _, header, rows = read_csv(out / "levels.csv")
    assert header == ["nu", "energy_J", "weight", "p_vertical", "p_oblique", "p_lost"]
    for r in rows:
        assert abs(sum(float(v) for v in r[3:]) - 1) < 1e-9
    # a fresh uncached run reproduces the bytes
    assert execute("split-run", cfg, tmp_path / "fresh", use_cache=False) == 0
    assert not (tmp_path / "fresh" / "cache").exists()
    for name, data in first.items():
        assert (tmp_path / "fresh" / name).read_bytes() == data


def test_sweep_of_one_equals_split_run(tmp_path):
    run = write(tmp_path, few_levels(REDUCED))
    sweep = write(tmp_path, few_levels(REDUCED.replace('"split-run"', '"split-sweep"'))
                  + "[sweep]\nratios = [1.0]\n", "sweep.toml")
    assert execute("split-run", run, tmp_path / "a") == 0
    assert execute("split-sweep", sweep, tmp_path / "b") == 0
    _, _, single = read_csv(tmp_path / "a" / "efficiency.csv")
    _, header, swept = read_csv(tmp_path / "b" / "splitting_efficiency.csv")
    assert header == ["ratio", "efficiency"]
    assert swept == single


def test_invalid_config_creates_nothing(tmp_path, capsys):
    cfg = write(tmp_path, REDUCED.replace("gamma_deg = 10.0", "gamma_deg = 95.0"))
    out = tmp_path / "never"
    assert execute("split-run", cfg, out) == 2
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["key"] == "guide.gamma_deg"


def test_scenario_mismatch_is_a_config_error(tmp_path):
    cfg = write(tmp_path, REDUCED)
    assert execute("eigen", cfg, tmp_path / "x") == 2
    assert execute("split-run", tmp_path / "missing.toml", tmp_path / "x") == 2
    assert not (tmp_path / "x").exists()


def test_setup_failure_writes_error_json(tmp_path, capsys):
    cfg = write(tmp_path, (CONFIGS / "reference_guide.toml").read_text().replace(
        "n_points = 8192", "n_points = 1024"))
    out = tmp_path / "out"
    assert execute("eigen", cfg, out) == 4
    payload = json.loads((out / "error.json").read_text())
    assert payload["error"] == "SetupError" and payload["required_points"] > 1024
    assert json.loads(capsys.readouterr().err)["exit_code"] == 4


def test_main_and_module_entry_point(tmp_path):
    cfg = write(tmp_path, REDUCED.replace('"split-run"', '"eigen"') + "max_states = 3\n")
    assert main(["eigen", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    proc = subprocess.run([sys.executable, "-m", "atomguide", "eigen", "--config", str(cfg),
                           "--out", str(tmp_path / "n"), "--no-cache"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "eigen.csv").read_bytes() == (tmp_path / "n" / "eigen.csv").read_bytes()
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_gpe_mu_curve_small(tmp_path):
    text = (CONFIGS / "gpe_mu_curve.toml").read_text().replace("n_points = 256", "n_points = 64")
    text = text.replace("nz = 256", "nz = 64").replace("n_curve_points = 13", "N_values = [1.0, 300.0]")
    cfg = write(tmp_path, text)
    out = tmp_path / "mu"
    assert execute("gpe-mu-curve", cfg, out) == 0
    _, header, rows = read_csv(out / "mu_curve.csv")
    assert header[0] == "N" and len(rows) == 2
    assert float(rows[1][1]) > float(rows[0][1])
    again = tmp_path / "mu2"
    assert execute("gpe-mu-curve", cfg, again, use_cache=False) == 0
    assert (out / "mu_curve.csv").read_bytes() == (again / "mu_curve.csv").read_bytes()
