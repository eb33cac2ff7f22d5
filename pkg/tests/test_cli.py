from __future__ import annotations

import io
import json
import subprocess
import sys

import numpy as np
import pytest

from fracou.cli import UsageError, main, resolve_config
from fracou.kernel import load_kernel_csv
from fracou.lsi import lsi_constants

SMALL = ["--steps", "32", "--paths", "200", "--no-timestamp"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--paths", "100", "--steps", "16"],
        ["simulate", "--format", "json"] + SMALL,
        ["kernel-dump", "--steps", "16"],
        ["verify-ibp", "--functional", "product", "--direction", "adapted_tanh", "--r", "0.5"] + SMALL,
        ["verify-clark-ocone", "--functional", "quadratic", "--alpha", "1"] + SMALL,
        ["lsi-constant", "--no-timestamp"],
        ["lsi-check"] + SMALL,
        ["selftest", "--no-timestamp"],
    ],
)
def test_commands_are_byte_identical(argv, capsys):
    code1, out1, _ = run(argv, capsys)
    code2, out2, _ = run(argv, capsys)
    assert code1 in (0, 1) and code1 == code2
    assert out1 and out1 == out2


def test_timestamp_present_by_default(capsys):
    code, out, _ = run(["lsi-constant", "--hurst", "0.75", "--alpha", "1"], capsys)
    assert code == 0 and "timestamp" in json.loads(out)


def test_lsi_constant_values(capsys):
    code, out, _ = run(["lsi-constant", "--hurst", "0.75", "--alpha", "0.5", "--no-timestamp"], capsys)
    rep = json.loads(out)
    assert rep["lsi_factor"] == pytest.approx(lsi_constants(0.75, 0.5).lsi_factor, rel=1e-12)
    code, out, _ = run(["lsi-constant", "--no-timestamp"], capsys)
    assert len(json.loads(out)["table"]) == 9


def test_lsi_constant_alpha_zero(capsys):
    code, out, _ = run(["lsi-constant", "--hurst", "0.75", "--alpha", "0", "--no-timestamp"], capsys)
    assert code == 0 and json.loads(out)["lsi_factor"] == 4.0


def test_selftest_passes(capsys):
    code, out, _ = run(["selftest", "--no-timestamp"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and all(rep["checks"].values())


@pytest.mark.parametrize(
    "argv",
    [
        ["verify-ibp", "--hurst", "0.4"],
        ["verify-ibp", "--hurst", "abc"],
        ["verify-ibp", "--functional", "cubic"],
        ["verify-ibp", "--paths", "10"],
        ["verify-ibp", "--alpha", "-1"],
        ["verify-ibp", "--hurst", "0.6,0.7"],
        ["verify-ibp", "--r", "2"],
        ["nonsense"],
        ["simulate", "--layout", "per-path"],
        ["verify-clark-ocone", "--functional", "constant"] + SMALL,
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err


def test_failed_check_exits_1(capsys):
    code, out, _ = run(["verify-clark-ocone", "--functional", "quadratic", "--max-ratio", "1e-9"] + SMALL, capsys)
    assert code == 1 and json.loads(out)["passed"] is False


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nseed = 11\nsteps = 64\nhurst=0.6\n")
    monkeypatch.setenv("FOU_SEED", "5")
    assert resolve_config("verify-ibp", {}, None).seed == 5
    c = resolve_config("verify-ibp", {"steps": 128}, str(cfg))
    assert (c.seed, c.steps, c.hurst) == (11, 128, "0.6")
    assert resolve_config("verify-ibp", {"seed": 3}, str(cfg)).seed == 3
    cfg.write_text("colour = red\n")
    with pytest.raises(UsageError):
        resolve_config("verify-ibp", {}, str(cfg))


def test_env_seed_changes_output(monkeypatch, capsys):
    argv = ["simulate", "--format", "json"] + SMALL
    monkeypatch.setenv("FOU_SEED", "1")
    _, a, _ = run(argv, capsys)
    monkeypatch.setenv("FOU_SEED", "2")
    _, b, _ = run(argv, capsys)
    assert json.loads(a)["config"]["seed"] == 1 and a != b


def test_output_files(tmp_path, capsys):
    out = tmp_path / "k.csv"
    assert main(["kernel-dump", "--steps", "16", "--hurst", "0.7", "--output", str(out)]) == 0
    k = load_kernel_csv(io.StringIO(out.read_text()))
    assert k.n == 16 and k.H == 0.7
    stem = tmp_path / "path.csv"
    assert main(["simulate", "--steps", "16", "--paths", "100", "--layout", "per-path", "--output", str(stem)]) == 0
    files = sorted(tmp_path.glob("path_*.csv"))
    assert len(files) == 100
    rows = np.loadtxt(files[0], delimiter=",", skiprows=1)
    assert rows.shape == (17, 4)


def test_csv_report(capsys):
    code, out, _ = run(["lsi-constant", "--format", "csv"], capsys)
    lines = out.splitlines()
    assert code == 0 and len(lines) == 10 and "lsi_factor" in lines[0]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fracou", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "0.1.0" in r.stdout
