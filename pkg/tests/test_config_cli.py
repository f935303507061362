import csv
import json
import subprocess
import sys

import pytest

from sdsm import cli
from sdsm.config import ConfigError, apply_override, defaults, describe, load_config

from conftest import TINY_CONFIG


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


def test_defaults_cover_every_described_key():
    cfg = defaults()
    for key, default, desc in describe():
        node = cfg
        for part in key.split("."):
            node = node[part]
        assert node == default
        assert desc


def test_override_parses_json_and_strings():
    cfg = defaults()
    apply_override(cfg, "forward.theta=50")
    apply_override(cfg, "out=results/run 1")
    apply_override(cfg, 'kernel.h={"kind": "gaussian", "amplitude": 2.0, "width": 1.0}')
    assert cfg["forward"]["theta"] == 50
    assert cfg["out"] == "results/run 1"
    assert cfg["kernel"]["h"]["amplitude"] == 2.0


@pytest.mark.parametrize(
    "override,match",
    [
        ("forward.thetta=3", "unknown config key"),
        ("forward=3", "section"),
        ("forward.theta", "key=value"),
        ("forward.theta=-1", "positive"),
        ('forward.theta="big"', "type number"),
        ("dual.m=0", "m must be"),
        ("forward.horizon=0.1", "horizon"),
    ],
)
def test_bad_overrides_rejected(override, match):
    with pytest.raises(ConfigError, match=match):
        load_config(None, [override])


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad.write_text('{"forward": {"nope": 1}}')
    with pytest.raises(ConfigError, match="forward.nope"):
        load_config(bad)


def test_file_then_overrides(tiny):
    cfg = load_config(tiny, ["forward.theta=30"])
    assert cfg["forward"]["theta"] == 30
    assert cfg["dual"]["replicates"] == 60
    assert cfg["seed"] == defaults()["seed"]


def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_estimate_dual_csv_contract(tiny, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["estimate-dual", "--config", str(tiny), "--out", str(out), "--seed", "3"])
    assert code == cli.EXIT_OK
    rows = _read(out / "dual_moment.csv")
    assert rows[0][:2] == ["experiment_id", "time"]
    assert rows[0][2:7] == ["estimate", "stderr", "n", "oracle", "z"]
    assert rows[1][4] == "60"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and "dual_moment.csv" in manifest["files"]
    assert "estimate" in capsys.readouterr().out


def test_numeric_out_directory(tiny, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["kernel-info", "--config", str(tiny), "--out", "123"]) == cli.EXIT_OK
    assert (tmp_path / "123" / "kernel_info.csv").exists()


def test_error_exit_code(tmp_path, capsys):
    code = cli.main(["simulate-forward", "--set", "forward.theta=-2", "--out", str(tmp_path)])
    assert code == cli.EXIT_ERROR
    assert "error: forward.theta must be positive" in capsys.readouterr().err


def test_statistical_failure_exit_code(tiny, tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "Z_THRESHOLD", -1.0)
    monkeypatch.setattr("sdsm.harness.Z_THRESHOLD", -1.0)
    code = cli.main(["check-duality", "--config", str(tiny), "--out", str(tmp_path)])
    assert code == cli.EXIT_STAT_FAIL


def test_show_config_lists_keys(capsys):
    assert cli.main(["show-config"]) == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "forward.theta = " in text and "catalyst.eta" in text


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "sdsm", "--help"], capture_output=True, text=True, check=True)
    for name in cli.COMMANDS:
        assert name in res.stdout
