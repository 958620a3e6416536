import json
import subprocess
import sys

import pytest

from heleshaw.cli import apply_overrides, main
from heleshaw.errors import ConfigError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    assert out == ""
    return code, err


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(p)


def test_simulate_writes_trajectory(tmp_path, capsys):
    code, err = run(capsys, "simulate", "--config", "constant.json", "--out", str(tmp_path))
    assert code == 0
    csv = tmp_path / "trajectory_eps0.1_seed0.csv"
    assert csv.exists() and (tmp_path / "events_eps0.1_seed0.jsonl").exists()
    assert "final support" in err


def test_malformed_json_exit_2(tmp_path, capsys):
    path = write(tmp_path, "bad.json", '{"schema": "heleshaw.experiment/1",\n "kind": "Cell",\n}')
    code, err = run(capsys, "cell", "--config", path)
    assert code == 2
    assert "line 3" in err and "column 1" in err


def test_missing_config_exit_2(capsys):
    assert run(capsys, "validate", "--config", "no_such_config.json")[0] == 2


def test_unknown_override_exit_2(capsys):
    code, err = run(capsys, "validate", "--config", "checkerboard.json", "--set", "model.params.colour=1")
    assert code == 2 and "unknown override" in err
    assert run(capsys, "validate", "--config", "checkerboard.json", "--set", "nonsense")[0] == 2


def test_bad_arguments_exit_2(capsys):
    assert main(["frobnicate", "--config", "x"]) == 2
    assert main(["validate", "--config", "constant.json", "--jobs", "0"]) == 2
    capsys.readouterr()


def test_validate_dichotomy_violation_exit_1(tmp_path, capsys):
    cfg = {"schema": "heleshaw.experiment/1", "kind": "Cell", "eps_list": [0.1], "seeds": [0],
           "model": {"kind": "Checkerboard", "params": {"cell": 1.0, "A": 1.0, "B": 1.0, "F": 1.0,
                                                        "G": {"levels": [0.0, 1.0], "probs": [0.5, 0.5]}}}}
    code, err = run(capsys, "validate", "--config", write(tmp_path, "g.json", cfg), "--out", str(tmp_path))
    assert code == 1
    assert "FAIL" in err and "dichotomy" in err
    assert "dichotomy" in (tmp_path / "validation.txt").read_text()


def test_validate_checkerboard_warns(capsys):
    code, err = run(capsys, "validate", "--config", "checkerboard.json")
    assert code == 0 and "WARN" in err


def test_numerical_failure_exit_3(tmp_path, capsys):
    code, err = run(capsys, "cell", "--config", "two_level_cell.json", "--out", str(tmp_path),
                    "--set", "tolerances.vbar=1e-9", "--set", "n_schedule=[16, 32]", "--jobs", "1")
    assert code == 3 and "NoConvergence" in err
    assert (tmp_path / "metrics.json").exists()


def test_failed_check_exit_1(tmp_path, capsys):
    code, err = run(capsys, "compare", "--config", "checkerboard_interior.json", "--out", str(tmp_path),
                    "--set", "thresholds.final_error=1e-9", "--jobs", "1")
    assert code == 1 and "FAIL final mean sup error" in err


def test_seed_offset_and_overrides(tmp_path, capsys):
    code, _ = run(capsys, "simulate", "--config", "constant.json", "--out", str(tmp_path), "--seed-offset", "5",
                  "--set", "T=0.1", "--set", 'sample_times=[]')
    assert code == 0 and (tmp_path / "trajectory_eps0.1_seed5.csv").exists()


def test_apply_overrides_rules():
    data = {"T": 1.0, "model": {"params": {"A": 1.0}}}
    apply_overrides(data, ["T=2", "model.params.A=3.5", "thresholds.final_error=0.1", "output=somewhere"])
    assert data == {"T": 2, "model": {"params": {"A": 3.5}}, "thresholds": {"final_error": 0.1},
                    "output": "somewhere"}
    with pytest.raises(ConfigError):
        apply_overrides(data, ["thresholds.bogus=1"])
    with pytest.raises(ConfigError):
        apply_overrides(data, ["model.kind.x=1"])


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "heleshaw.cli", "validate", "--config", "constant.json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and proc.stdout == ""
    assert "PASS" in proc.stderr
