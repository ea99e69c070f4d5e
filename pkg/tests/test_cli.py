import json
import subprocess
import sys

import pytest

from calabi_lab.cli import main
from calabi_lab.pipeline import RunConfig


def test_nadir_schedule(capsys, tmp_path):
    assert main(["nadir", "schedule", "--r1", "1", "--rho1", "1", "--eps1", "0.1", "-J", "10",
                 "--csv", str(tmp_path / "s.csv")]) == 0
    out = capsys.readouterr().out
    assert "1.118033989" in out
    table = [ln for ln in out.splitlines() if ln.split() and ln.split()[0].isdigit()]
    assert len(table) == 10
    rows = (tmp_path / "s.csv").read_text().strip().splitlines()
    assert len(rows) == 11


def test_cantor_bad_gamma(capsys):
    assert main(["cantor", "--gamma", "1.5"]) == 1
    assert "gamma" in capsys.readouterr().err


def test_cantor_outputs(tmp_path):
    svg, js = tmp_path / "c.svg", tmp_path / "c.json"
    assert main(["cantor", "--gamma", "0.2", "--depth", "3", "--svg", str(svg), "--json", str(js)]) == 0
    assert svg.read_text().count("<polygon") == 65
    assert len(json.loads(js.read_text())["levels"][-1]) == 64


@pytest.mark.parametrize("argv", [[], ["bogus"], ["cantor", "--nope"], ["nadir", "schedule", "-J", "x"]])
def test_usage(argv):
    assert main(argv) == 64


def test_rh_roundtrip(tmp_path):
    out = tmp_path / "rh.json"
    assert main(["rh", "solve", "--f", "[0, 1]", "--fiber", "[[0.5]]", "--r", "0.5", "--eps", "0.1",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["N"] == 3
    assert main(["rh", "verify", "--input", str(out)]) == 0
    assert main(["rh", "verify", "--input", str(out), "--eps", "1e-6"]) == 2


def test_rh_unsolvable():
    assert main(["rh", "solve", "--f", "[0, 1]", "--fiber", "[[5]]", "--r", "0.9", "--eps", "1e-9",
                 "--n-max", "2"]) == 2


@pytest.mark.parametrize("argv,code", [
    (["convexity", "check", "--phi", "quadratic"], 0),
    (["convexity", "check", "--phi", "saddle"], 0),
    (["convexity", "check", "--phi", "saddle", "--tol", "1e-9"], 2),
    (["convexity", "check", "--mesh", "torus"], 0),
    (["convexity", "check", "--mesh", "sphere", "--level", "3"], 0),
])
def test_convexity(argv, code):
    assert main(argv) == code


def test_weier(tmp_path, capsys):
    assert main(["weier", "integrate", "--surface", "enneper", "--h", "0.1", "--ply", str(tmp_path / "e.ply")]) == 0
    assert (tmp_path / "e.ply").stat().st_size > 0
    assert main(["weier", "flux", "--surface", "catenoid"]) == 0
    assert "6.28" in capsys.readouterr().out


def test_run(tmp_path):
    cfg = RunConfig(J=1, h=0.08, fit_samples=1000, voxel_spacing=0.5)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg.to_json()))
    code = main(["run", "--config", str(path), "--out", str(tmp_path / "out"), "--print-summary"])
    assert code in (0, 2)
    assert (tmp_path / "out" / "stage_1.ply").exists()
    assert (tmp_path / "out" / "manifest.json").exists()


def test_run_bad_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"J": 1, "gamma": 3.0}))
    assert main(["run", "--config", str(path)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_entry_point():
    out = subprocess.run([sys.executable, "-m", "calabi_lab.cli", "nadir", "schedule", "-J", "3"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "rho" in out.stdout
