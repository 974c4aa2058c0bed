import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from romfwi.cli import main
from romfwi.io import read_response, read_rom, read_series, read_velocity

SMALL = """\
name: small
model: {name: camembert, params: {center: [500.0, 500.0], radius: 200.0}}
grid: {width: 1000.0, depth: 1000.0, h: 25.0}
array: {m: 4, spacing: 100.0, depth: 100.0}
time: {tau: 0.0435, n: 6}
inversion:
  c0: 3000.0
  layers: 2
  iters: 2
  d: 6
  basis: {nx: 3, nz: 3, x_range: [300.0, 700.0], z_range: [300.0, 700.0], sigma: 100.0, sigma_perp: 100.0}
"""

SWEEP = ["--builtin", "landscape", "--set", "grid.width=1000", "--set", "grid.depth=800", "--set", "grid.h=25",
         "--set", "array.m=4", "--set", "array.spacing=100", "--set", "array.depth=100", "--set", "time.n=6",
         "--set", "sweep.positions=[350,650,8]", "--set", "sweep.contrasts=[1.5,2.5,8]",
         "--set", "sweep.true_position=500"]


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL, encoding="utf-8")
    return str(p)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_simulate_camembert_shapes(tmp_path):
    out = tmp_path / "cam"
    assert main(["simulate", "--builtin", "camembert", "--out", str(out)]) == 0
    resp = read_response(out / "response.bin")
    ds = read_series(out / "series.bin")
    v = read_velocity(out / "velocity.bin")
    assert resp.m == 10 and ds.m == 10 and ds.n == 16 and len(ds) == 32 and ds.tau == 0.0435
    assert v.grid.shape == (101, 81)
    manifest = json.loads((out / "manifest_simulate.json").read_text())
    assert len(manifest["config_sha256"]) == 64 and manifest["seed"] == 0


def test_simulate_is_deterministic(tmp_path, small_cfg):
    for tag in ("a", "b"):
        assert main(["simulate", "--config", small_cfg, "--out", str(tmp_path / tag)]) == 0
    for name in ("velocity.bin", "response.bin", "series.bin", "manifest_simulate.json", "config.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("override", ["time.n=0", "time.tau=0"])
def test_zero_duration_is_a_configuration_error(tmp_path, small_cfg, override):
    assert main(["simulate", "--config", small_cfg, "--set", override, "--out", str(tmp_path)]) == 2


def test_configuration_errors(tmp_path, small_cfg, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["simulate", "--builtin", "nope"]) == 2
    assert main(["simulate", "--config", small_cfg, "--builtin", "camembert"]) == 2
    assert main(["simulate", "--config", small_cfg, "--set", "grid.colour=red"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_build_rom_noiseless_is_exact(tmp_path, small_cfg, capsys):
    assert main(["build-rom", "--config", small_cfg, "--out", str(tmp_path)]) == 0
    assert "provenance=exact" in capsys.readouterr().out
    rom = read_rom(tmp_path / "rom.bin")
    assert rom.provenance == "exact" and (rom.m, rom.n) == (4, 6)


def test_build_rom_noisy_without_regularization_fails(tmp_path, capsys):
    code = main(["build-rom", "--builtin", "marmousi_noisy", "--r", "none", "--out", str(tmp_path)])
    assert code == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "--r auto" in err


def test_build_rom_noisy_auto_threshold(tmp_path, capsys):
    assert main(["build-rom", "--builtin", "marmousi_noisy", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    rom = read_rom(tmp_path / "rom.bin")
    assert rom.provenance.startswith("regularized(")
    r = int(rom.provenance[len("regularized("):-1])
    assert f"r={r}" in out and "R^N=" in out
    assert 1 <= r < 16
    manifest = json.loads((tmp_path / "manifest_build-rom.json").read_text())
    assert manifest["outputs"]["provenance"] == rom.provenance


def test_build_rom_from_series_file(tmp_path, small_cfg):
    # off-center disk: a mirror-symmetric medium breaks the Lanczos recursion for 1 < r < n
    shift = ["--set", "model.params={center: [460.0, 520.0], radius: 200.0}"]
    assert main(["simulate", "--config", small_cfg, *shift, "--out", str(tmp_path)]) == 0
    assert main(["build-rom", "--config", small_cfg, *shift, "--series", str(tmp_path / "series.bin"),
                 "--r", "3", "--out", str(tmp_path)]) == 0
    assert read_rom(tmp_path / "rom.bin").provenance == "regularized(3)"


def test_build_rom_reports_lanczos_breakdown(tmp_path, small_cfg, capsys):
    assert main(["build-rom", "--config", small_cfg, "--r", "3", "--out", str(tmp_path)]) == 3
    assert "smaller r" in capsys.readouterr().err


def test_sweep_cardinality(tmp_path):
    assert main(["sweep", *SWEEP, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "landscape.csv")
    assert len(rows) == 64
    assert list(rows[0]) == ["position", "contrast", "log10_fwi", "log10_rom"]
    assert all(np.isfinite(float(r["log10_rom"])) for r in rows)


@pytest.mark.parametrize("method", ["rom", "fwi"])
def test_invert_logs(tmp_path, small_cfg, method):
    assert main(["invert", "--config", small_cfg, "--method", method, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / f"log_{method}.csv")
    assert len(rows) == 4
    assert list(rows[0]) == ["i", "layer", "k_l", "mu", "alpha", "objective", "eta_norm"]
    for a, b in zip(rows, rows[1:]):
        if a["layer"] == b["layer"]:
            assert float(b["objective"]) <= float(a["objective"])
    assert read_velocity(tmp_path / f"estimate_{method}.bin").grid.shape == (41, 41)


def test_compare_summary(tmp_path, small_cfg):
    assert main(["compare", "--config", small_cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "summary.csv")
    assert [r["method"] for r in rows] == ["rom", "fwi"]
    for r in rows:
        assert float(r["rmse"]) > 0 and int(r["iterations"]) == 4
    for m in ("rom", "fwi"):
        assert (tmp_path / f"log_{m}.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "romfwi", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "build-rom", "sweep", "invert", "compare"):
        assert cmd in res.stdout
