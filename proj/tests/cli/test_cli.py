import json
import os
import struct
import subprocess
from pathlib import Path

import pytest

BIN = os.environ.get("KDVB_BIN", "kdvb")


def run(args, out_dir, config=None, tmp=None):
    cmd = [BIN, *args]
    if config is not None:
        path = Path(tmp) / "run.cfg"
        path.write_text(config)
        cmd += ["-c", str(path)]
    env = dict(os.environ, KDVB_OUTPUT_DIR=str(out_dir))
    return subprocess.run(cmd, capture_output=True, text=True, env=env, timeout=300)


def small(extra=""):
    return "N = 32\nM = 32\n" + extra


def test_help_lists_every_key(tmp_path):
    res = subprocess.run([BIN, "simulate", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    cfg = run(["simulate"], tmp_path / "o", small(), tmp_path)
    assert cfg.returncode == 0
    keys = [line.split("=")[0].strip()
            for line in (tmp_path / "o" / "config.resolved.txt").read_text().splitlines()
            if "=" in line and not line.startswith("#")]
    assert len(keys) > 30
    for k in keys:
        assert f"  {k} [" in res.stdout, k


def test_simulate_outputs(tmp_path):
    out = tmp_path / "o"
    res = run(["simulate"], out, small("field_format = both\n"), tmp_path)
    assert res.returncode == 0, res.stderr
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == "kdvb-1"
    lines = (out / "field.csv").read_text().splitlines()
    assert lines[0] == "t,x,value"
    assert len(lines) == 1 + 33 * 33
    raw = (out / "field.bin").read_bytes()
    rows, cols = struct.unpack("<QQ", raw[:16])
    assert (rows, cols) == (33, 33)
    assert len(raw) == 16 + 8 * rows * cols
    values = struct.unpack(f"<{rows * cols}d", raw[16:])
    for k, line in enumerate(lines[1:]):
        assert float(line.split(",")[2]) == pytest.approx(values[k], rel=1e-12, abs=1e-300)


def test_resolved_config_round_trips(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate"], a, small("nu0 = 0.2\n"), tmp_path).returncode == 0
    resolved = (a / "config.resolved.txt").read_text()
    assert "nu0 = 0.2" in resolved
    (tmp_path / "again.cfg").write_text(resolved)
    env = dict(os.environ, KDVB_OUTPUT_DIR=str(b))
    res = subprocess.run([BIN, "simulate", "-c", str(tmp_path / "again.cfg")],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert (b / "config.resolved.txt").read_text() == resolved
    assert (a / "field.csv").read_bytes() == (b / "field.csv").read_bytes()


def test_runs_are_bitwise_deterministic(tmp_path):
    cfg = small("y0 = random:0.5\nsource = random:0.3\n")
    for d in ("a", "b"):
        assert run(["null-control"], tmp_path / d, cfg, tmp_path).returncode == 0
    for name in ("control.csv", "state.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("text", ["bogus = 1\n", "N = many\n", "theta = 0.1\n", "N = 32\nN = 16\n"])
def test_invalid_config_exits_2_with_json(tmp_path, text):
    out = tmp_path / "o"
    res = run(["simulate"], out, text, tmp_path)
    assert res.returncode == 2
    err = json.loads(res.stderr.strip().splitlines()[-1])
    assert err["schema_version"] == "kdvb-1"
    assert err["error"]["exit_code"] == 2
    assert json.loads((out / "error.json").read_text())["error"]["kind"] == "invalid_config"


def test_unknown_option_exits_2(tmp_path):
    res = subprocess.run([BIN, "simulate", "--nope"], capture_output=True, text=True)
    assert res.returncode == 2
    assert json.loads(res.stderr.strip().splitlines()[-1])["error"]["kind"] == "usage"


def test_solver_failure_exits_3(tmp_path):
    res = run(["simulate"], tmp_path / "o", small("y0 = sin:1000:1\nmaxit = 5\n"), tmp_path)
    assert res.returncode == 3
    err = json.loads(res.stderr.strip().splitlines()[-1])
    assert err["error"]["exit_code"] == 3


def test_null_control_report(tmp_path):
    out = tmp_path / "o"
    res = run(["null-control"], out, "", tmp_path)
    assert res.returncode == 0, res.stderr
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == "kdvb-1"
    assert rep["terminal_norm"] <= 1e-3
    assert rep["control_outside_omega_max"] == 0.0
    assert rep["identity"]["relative_gap"] <= 1e-8


def test_track_and_weights_export(tmp_path):
    res = run(["track"], tmp_path / "t", "y0 = sin:0.05:1 + random:0.01\n", tmp_path)
    assert res.returncode == 0, res.stderr
    rep = json.loads((tmp_path / "t" / "report.json").read_text())
    assert rep["iterations"] <= 10
    res = run(["weights-export"], tmp_path / "w", "", tmp_path)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "w" / "profile.csv").read_text().startswith("x,phi")


def test_verify_suites(tmp_path):
    res = run(["verify", "--suite", "duality"], tmp_path / "d", small(), tmp_path)
    assert res.returncode == 0, res.stderr
    rep = json.loads((tmp_path / "d" / "verify_duality.json").read_text())
    assert rep["passed"] is True
    bad = subprocess.run([BIN, "verify", "--suite", "nope"], capture_output=True, text=True)
    assert bad.returncode == 2


def test_verification_failure_exits_4(tmp_path):
    # the beta ratio grows along the s-sweep, so the default Carleman suite fails
    res = run(["verify", "--suite", "carleman"], tmp_path / "c", "", tmp_path)
    assert res.returncode == 4
    err = json.loads(res.stderr.strip().splitlines()[-1])
    assert err["error"]["kind"] == "verification_failure"
    rep = json.loads((tmp_path / "c" / "verify_carleman.json").read_text())
    assert rep["passed"] is False
