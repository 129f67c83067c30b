import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dnlab.cli import main
from dnlab.fourier import GridField

from conftest import GOLDEN, fixture_path


def run(*args, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "dnlab.cli", *map(str, args)], capture_output=True,
                          text=True, env=full_env, timeout=600)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_validate_fixture():
    r = run("validate", fixture_path(1, "weak"))
    assert r.returncode == 0 and r.stdout.startswith("ok:")


def test_validate_error_codes(tmp_path):
    assert run("validate", tmp_path / "missing.json").returncode == 2
    text = fixture_path(1, "none").read_text()
    assert run("validate", write(tmp_path, "cut.json", text[: len(text) // 2])).returncode == 3
    doc = json.loads(text)
    doc["t"] = [0, 2]
    r = run("validate", write(tmp_path, "bad.json", json.dumps(doc)))
    assert r.returncode == 4
    assert "/t/0" in r.stderr and "t_j > 0" in r.stderr
    assert "Traceback" not in r.stderr
    assert run("bogus-command").returncode == 64


def test_check_ellipticity(tmp_path):
    out = tmp_path / "rep.json"
    r = run("check-ellipticity", fixture_path(1, "weak"), "--no-constants", "--out", out)
    assert r.returncode == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and len(rep["levels"]) == 2 and rep["levels"][0]["kappa_estimate"] > 0.1
    doc = json.loads(fixture_path(1, "weak").read_text())
    doc["sector"] = {"theta_min": 0.0, "theta_max": 6.283185307179586}
    r = run("check-ellipticity", write(tmp_path, "wide.json", json.dumps(doc)), "--no-constants", "--out", out)
    assert r.returncode == 1
    assert json.loads(out.read_text())["levels"][0]["witness"] is not None
    r = run("check-ellipticity", fixture_path(1, "weak"), "--resolution", "1")
    assert r.returncode == 5


def test_solve(tmp_path):
    r = run("solve", fixture_path(1, "strong"), "--lambda=-5,1", "--out", tmp_path / "s")
    assert r.returncode == 0
    u = GridField.from_bytes((tmp_path / "s" / "solution.bin").read_bytes())
    rep = json.loads((tmp_path / "s" / "solve.json").read_text())
    assert u.N == 2 and u.grid.M == 64
    assert rep["relative_residual"] <= 1e-10
    r = run("solve", fixture_path(1, "none"), "--lambda", "1,0", "--x0", "0", "--out", tmp_path / "t")
    assert r.returncode == 5
    assert "witness" in r.stderr


def test_norms_zero_field(capsys):
    assert main(["norms", str(fixture_path(1, "none")), "--lambda=-10,0", "--field", "zero"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["product_t"] == 0.0 and rep["product_minus_s"] == 0.0
    assert all(v == 0.0 for c in rep["components"] for k, v in c.items() if k != "component")


def test_norms_apriori(capsys):
    assert main(["norms", str(fixture_path(1, "none")), "--lambda=-100,0", "--apriori", "exact"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["apriori"]["mode"] == "exact" and rep["apriori"]["ratio"] > 0


def test_spectrum_command(tmp_path):
    r = run("spectrum", fixture_path(1, "none"), "--grid", 16, "--lambda", "0,0", "--refine", "--out", tmp_path)
    assert r.returncode == 0
    rep = json.loads((tmp_path / "spectrum.json").read_text())
    probe = rep["index_probes"][0]
    assert (probe["dim_ker"], probe["dim_coker"], probe["index"]) == (4, 4, 0)
    assert rep["class_counts"]["isolated-candidate"] == 0
    assert len((tmp_path / "eigenvalues.csv").read_text().splitlines()) == 33
    assert run("spectrum", fixture_path(2, "none"), "--grid", 66, "--out", tmp_path).returncode == 5


def test_jobs_env_and_usage(tmp_path):
    a = run("spectrum", fixture_path(1, "weak"), "--grid", 16, "--out", tmp_path / "a")
    b = run("spectrum", fixture_path(1, "weak"), "--grid", 16, "--out", tmp_path / "b", env={"DN_JOBS": "2"})
    assert a.returncode == b.returncode == 0
    assert (tmp_path / "a" / "eigenvalues.csv").read_bytes() == (tmp_path / "b" / "eigenvalues.csv").read_bytes()
    assert run("reproduce-example", "--n", 3, "--out", tmp_path / "x").returncode == 64
    assert run("reproduce-example", "--ladder", "16:2pi", "--out", tmp_path / "x").returncode == 64


def _assert_close(a, b, path=""):
    if isinstance(a, dict):
        assert isinstance(b, dict) and list(a) == list(b), path
        for k in a:
            _assert_close(a[k], b[k], f"{path}/{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _assert_close(x, y, f"{path}/{i}")
    elif isinstance(a, float) and isinstance(b, float):
        assert b == pytest.approx(a, rel=1e-7, abs=1e-9), path
    else:
        assert a == b, path


def _csv_values(text):
    rows = [line.split(",") for line in text.splitlines()[1:]]
    return np.array([[float(r[0]), float(r[1]), float(r[3])] for r in rows]), [r[2] for r in rows]


@pytest.fixture(scope="module")
def reproduced(tmp_path_factory):
    base = tmp_path_factory.mktemp("repro")
    runs = []
    for name in ("a", "b"):
        r = run("reproduce-example", "--out", base / name)
        assert r.returncode == 0, r.stderr
        runs.append(base / name)
    return runs


def test_reproduce_deterministic(reproduced):
    a, b = reproduced
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    assert "report.json" in names and "eigenvalues.csv" in names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_reproduce_matches_golden(reproduced):
    out = reproduced[0]
    assert sorted(os.listdir(out)) == sorted(os.listdir(GOLDEN))
    _assert_close(json.loads((GOLDEN / "report.json").read_text()), json.loads((out / "report.json").read_text()))
    for name in os.listdir(GOLDEN):
        if name.endswith(".csv"):
            gv, gc = _csv_values((GOLDEN / name).read_text())
            ov, oc = _csv_values((out / name).read_text())
            assert gc == oc, name
            np.testing.assert_allclose(ov, gv, rtol=1e-7, atol=1e-9)


def test_reproduce_default_content(reproduced):
    rep = json.loads((reproduced[0] / "report.json").read_text())
    assert rep["errors"] == []
    assert rep["ellipticity"]["passed"]
    assert rep["spectrum"]["isolated_counts"] == [0, 0]
    assert all(p["index"] == 0 for p in rep["index_probes"])
