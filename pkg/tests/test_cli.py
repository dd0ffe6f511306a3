import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fbplap.cli import main
from fbplap.fieldio import read_field

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SCALAR = """
[problem]
dim = 1
lo = 0
hi = 2
h = {h}
p = 2
Q = 1
g1 = 1
g1.x1_hi = 0
"""


def _cfg(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_solve_and_verify_1d(tmp_path, capsys):
    cfg = _cfg(tmp_path, SCALAR.format(h="1/64"))
    out = tmp_path / "out"
    rc, text, _ = _run(capsys, "solve", "--config", cfg, "--out", out)
    assert rc == 0
    line = json.loads(text.strip().splitlines()[-1])
    assert line["passed"] and line["artifact"].endswith("solve.json")
    state = read_field(out / "field.fbfield")
    x = state.grid.axis(0)
    assert abs(x[np.nonzero(state.mask)[0].max()] - 1.0) <= 1 / 64
    assert (out / "config.resolved.ini").exists()
    before = (out / "field.fbfield").read_bytes()
    rc, _, _ = _run(capsys, "verify", "--config", cfg, "--out", out)
    assert rc == 0
    assert (out / "field.fbfield").read_bytes() == before
    doc = json.loads((out / "verify.json").read_text())
    assert doc["passed"] and {r["report"] for r in doc["records"]} >= {"nondegeneracy", "density", "viscosity"}


def test_solve_is_deterministic(tmp_path, capsys):
    cfg = _cfg(tmp_path, SCALAR.format(h="1/32"))
    for d in ("a", "b"):
        assert _run(capsys, "solve", "--config", cfg, "--out", tmp_path / d, "--seed", 5)[0] == 0
    assert (tmp_path / "a" / "field.fbfield").read_bytes() == (tmp_path / "b" / "field.fbfield").read_bytes()
    # the resolved config reproduces the run
    resolved = str(tmp_path / "a" / "config.resolved.ini")
    assert _run(capsys, "solve", "--config", resolved, "--out", tmp_path / "c")[0] == 0
    assert (tmp_path / "a" / "field.fbfield").read_bytes() == (tmp_path / "c" / "field.fbfield").read_bytes()


def test_zero_data_verify(tmp_path, capsys):
    out = tmp_path / "zero"
    cfg = str(CONFIGS / "zero_1d.ini")
    assert _run(capsys, "solve", "--config", cfg, "--out", out)[0] == 0
    rc, _, _ = _run(capsys, "verify", "--config", cfg, "--out", out)
    assert rc == 0
    assert "no free boundary" in (out / "verify.json").read_text()


def test_oracle_agrees_with_solve(tmp_path, capsys):
    out = tmp_path / "orc"
    cfg = str(CONFIGS / "oracle_1d.ini")
    assert _run(capsys, "solve", "--config", cfg, "--out", out)[0] == 0
    rc, _, _ = _run(capsys, "oracle", "--config", cfg, "--out", out)
    assert rc == 0
    doc = json.loads((out / "oracle.json").read_text())
    assert doc["passed"]
    assert abs(doc["comparison"]["relative_gap"]) <= 1e-6


def test_oracle_too_large_is_an_error(tmp_path, capsys):
    cfg = _cfg(tmp_path, SCALAR.format(h="1/64"))
    rc, _, err = _run(capsys, "oracle", "--config", cfg, "--out", tmp_path)
    assert rc == 2 and json.loads(err)["error"] == "InstanceTooLarge"


def test_missing_artifact_and_bad_config(tmp_path, capsys):
    cfg = _cfg(tmp_path, SCALAR.format(h="1/32"))
    rc, _, err = _run(capsys, "verify", "--config", cfg, "--out", tmp_path / "empty")
    assert rc == 2 and "error" in json.loads(err)
    bad = _cfg(tmp_path, SCALAR.format(h="1/32").replace("p = 2", "p = 0.5"), "bad.ini")
    rc, _, err = _run(capsys, "solve", "--config", bad, "--out", tmp_path / "x")
    assert rc == 2 and "problem.p" in json.loads(err)["message"]
    rc, _, _ = _run(capsys, "solve", "--out", tmp_path / "x")
    assert rc == 2
    rc, _, _ = _run(capsys, "solve", "--config", cfg, "--seed", -1)
    assert rc == 2


def test_blowup_warning_and_strict(tmp_path, capsys):
    # on a coarse grid no blow-up box of radius 64h fits inside the domain
    cfg = _cfg(tmp_path, SCALAR.format(h="1/8"))
    out = tmp_path / "b"
    assert _run(capsys, "solve", "--config", cfg, "--out", out)[0] == 0
    rc, _, _ = _run(capsys, "blowup", "--config", cfg, "--out", out)
    assert rc == 0
    assert json.loads((out / "blowup.json").read_text())["warnings"] == ["no regular points found"]
    rc, _, _ = _run(capsys, "blowup", "--config", cfg, "--out", out, "--strict")
    assert rc == 1


def test_sweep_and_report(tmp_path, capsys):
    cfg = _cfg(tmp_path, SCALAR.format(h="1/32"))
    out = tmp_path / "sweep"
    rc, _, _ = _run(capsys, "sweep", "--config", cfg, "--out", out, "--param", "p", "--values", "2,3")
    assert rc == 0
    rows = (out / "summary.csv").read_text().splitlines()
    assert rows[0].startswith("source,problem_hash,report,passed")
    assert len(rows) > 2
    rc, text, _ = _run(capsys, "report", "--out", tmp_path / "rep", out / "run00" / "verify.json",
                       out / "run01" / "verify.json")
    assert rc == 0 and json.loads(text)["rows"] == len(rows) - 1
    rc, _, _ = _run(capsys, "report", "--out", tmp_path / "rep", tmp_path / "nope.json")
    assert rc == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fbplap", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("fbplap ")
