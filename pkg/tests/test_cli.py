import io
import json
import subprocess
import sys

import pytest

from drise.bench import config_to_dict, BenchConfig
from drise.cli import main
from drise.vehicle import Scenario


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def write_config(path, horizon=60, seeds=(0, 1), **scenario):
    cfg = config_to_dict(BenchConfig(scenario=Scenario(horizon=horizon), seeds=seeds))
    cfg["scenario"].update(scenario)
    cfg["output_dir"] = str(path.parent / "default-out")
    path.write_text(json.dumps(cfg))
    return path


def test_validate_ok(tmp_path):
    code, out, _ = call("validate", "--config", str(write_config(tmp_path / "c.json")))
    assert code == 0 and out.startswith("ok")


def test_validate_names_bad_field(tmp_path):
    cfg = tmp_path / "c.json"
    write_config(cfg)
    data = json.loads(cfg.read_text())
    data["scenario"]["robust"]["theta2_x"] = 0.5
    cfg.write_text(json.dumps(data))
    code, _, err = call("validate", "--config", str(cfg))
    assert code == 1 and "theta2_x" in err


def test_validate_bad_json_and_missing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert call("validate", "--config", str(bad))[0] == 1
    assert call("validate", "--config", str(tmp_path / "absent.json"))[0] == 1


def test_reduction_test_default_config():
    code, out, _ = call("reduction-test")
    assert code == 0
    assert "PASS" in out.splitlines()[-1]


def test_usage_errors_exit_64():
    for argv in ([], ["frobnicate"], ["run"], ["run", "--config"], ["validate", "--bogus", "x"]):
        with pytest.raises(SystemExit) as info:
            call(*argv)
        assert info.value.code == 64, argv


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "drise", "nonsense"], capture_output=True, text=True)
    assert res.returncode == 64
    assert "usage" in res.stderr


def test_run_twice_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    for name in ("a", "b"):
        code, out, _ = call("run", "--config", str(cfg), "--out", str(tmp_path / name))
        assert code == 0 and "drise" in out
    a = sorted((tmp_path / "a").glob("*.csv"))
    assert len(a) >= 9
    for fp in a:
        assert fp.read_bytes() == (tmp_path / "b" / fp.name).read_bytes(), fp.name


def test_run_seed_override_and_env(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.json")
    monkeypatch.setenv("DRISE_OUT", str(tmp_path / "env"))
    code, _, _ = call("run", "--config", str(cfg), "--seed", "7")
    assert code == 0
    runs = json.loads((tmp_path / "env" / "report.json").read_text())["runs"]
    assert {r["seed"] for r in runs} == {7}


def test_run_fault_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    write_config(cfg, seeds=(0,))
    data = json.loads(cfg.read_text())
    data["scenario"]["robust"].update(theta2_x=1.0, theta2_v=20.0)
    cfg.write_text(json.dumps(data))
    code, _, err = call("run", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2 and "failed cell drise" in err
    assert (tmp_path / "o" / "summary.csv").exists()
