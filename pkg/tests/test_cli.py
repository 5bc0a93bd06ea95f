import json
import os
import subprocess
import sys

import pytest
import yaml

from mourrelab.cli import RECIPES, dump_json, merge, resolve, ConfigError


def cli(*args, cwd=None, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "mourrelab", *args], capture_output=True, text=True,
                          cwd=cwd, env=full_env)


def run(tmp_path, *args):
    return cli("run", *args, "--out-dir", str(tmp_path))


def test_recipes_listed():
    out = cli("recipes")
    assert out.returncode == 0
    for name in RECIPES:
        assert name in out.stdout


def test_show_prints_yaml():
    out = cli("show", "window")
    assert out.returncode == 0
    cfg = yaml.safe_load(out.stdout)
    assert cfg["u"] == "nakamura" and cfg["grid"]["n"] == 256


@pytest.mark.parametrize("recipe, extra", [
    ("window", []),
    ("flow-check", []),
    ("commutator-check", []),
    ("witness", []),
    ("mourre-certificate", ["--expect", "satisfied"]),
    ("lap-sweep", ["--grid-n", "512", "--grid-l", "80", "--set", "expect=[LAP-consistent, divergent]"]),
    ("regularity-scan", ["--grid-n", "1024", "--expect", "satisfied"]),
    ("wave-op", ["--grid-n", "1024", "--grid-l", "100", "--set", "times=41", "--expect", "convergent"]),
])
def test_every_recipe_meets_its_expectation(tmp_path, recipe, extra):
    out = run(tmp_path, recipe, *extra)
    assert out.returncode == 0, out.stdout + out.stderr
    res = json.loads((tmp_path / recipe / "result.json").read_text())
    man = json.loads((tmp_path / recipe / "manifest.json").read_text())
    assert res["recipe"] == recipe and res["expectation"] == "met"
    assert man["recipe"] == recipe and man["outputs"]
    for item in man["outputs"]:
        assert (tmp_path / recipe / item["file"]).exists()


def test_window_prints_interval(tmp_path):
    out = run(tmp_path, "window")
    assert "window: (0, 9.8696)" in out.stdout
    assert (tmp_path / "window" / "window.csv").read_text().startswith("left,right,window_inf")


def test_no_expectation_is_recorded(tmp_path):
    out = run(tmp_path, "mourre-certificate")
    assert out.returncode == 0
    assert json.loads((tmp_path / "mourre-certificate" / "result.json").read_text())["expectation"] == "none"


def test_expectation_list_length_checked(tmp_path):
    out = run(tmp_path, "lap-sweep", "--grid-n", "256", "--grid-l", "40", "--set", "expect=[divergent]")
    assert out.returncode == 1


def test_violated_expectation_exits_2(tmp_path):
    out = run(tmp_path, "witness", "--expect", "bounded")
    assert out.returncode == 2
    assert json.loads((tmp_path / "witness" / "result.json").read_text())["expectation"] == "violated"


def test_unknown_recipe_suggests(tmp_path):
    out = run(tmp_path, "windw")
    assert out.returncode == 1 and "window" in out.stderr


def test_unknown_key_suggests(tmp_path):
    out = run(tmp_path, "window", "--set", "fractons=[0.5]")
    assert out.returncode == 1 and "fractions" in out.stderr


def test_malformed_set(tmp_path):
    out = run(tmp_path, "window", "--set", "fractions")
    assert out.returncode == 1


def test_bad_option_exits_1(tmp_path):
    assert run(tmp_path, "window", "--grid-n", "abc").returncode == 1
    assert cli("nonsense").returncode == 1


def test_yaml_config_and_set(tmp_path):
    conf = tmp_path / "conf.yaml"
    conf.write_text(yaml.safe_dump({"a": 2.0, "fractions": [0.5, 1.0]}))
    out = run(tmp_path, "window", "-c", str(conf), "--set", "left=0.1")
    assert out.returncode == 0, out.stderr
    man = json.loads((tmp_path / "window" / "manifest.json").read_text())
    assert man["config"]["a"] == 2.0 and man["config"]["left"] == 0.1
    assert man["config"]["fractions"] == [0.5, 1.0]
    assert "window: (0, 2.4674)" in out.stdout


def test_replay_identical(tmp_path):
    assert run(tmp_path, "commutator-check").returncode == 0
    out = cli("replay", str(tmp_path / "commutator-check" / "manifest.json"))
    assert out.returncode == 0 and "identical" in out.stdout
    assert (tmp_path / "commutator-check" / "replay" / "result.json").exists()


def test_replay_detects_tampering(tmp_path):
    assert run(tmp_path, "window").returncode == 0
    man_path = tmp_path / "window" / "manifest.json"
    man = json.loads(man_path.read_text())
    man["outputs"][0]["sha256"] = "0" * 64
    man_path.write_text(json.dumps(man))
    out = cli("replay", str(man_path))
    assert out.returncode == 2 and "mismatch" in out.stdout


def test_out_dir_from_environment(tmp_path):
    out = cli("run", "window", env={"MOURRELAB_OUT_DIR": str(tmp_path / "env")})
    assert out.returncode == 0
    assert (tmp_path / "env" / "window" / "result.json").exists()


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli("run", "flow-check", "--out-dir", str(a)).returncode == 0
    assert cli("run", "flow-check", "--out-dir", str(b), "--workers", "2").returncode == 0
    for name in ("result.json", "flow.csv"):
        assert (a / "flow-check" / name).read_bytes() == (b / "flow-check" / name).read_bytes()


def test_free_form_merge_keeps_family():
    cfg = resolve("wave-op", {}, {"S": {"power": 0.5}})
    assert cfg["S"]["family"] == "bracket" and cfg["S"]["power"] == 0.5
    cfg = resolve("witness", {}, {"potential": {"family": "exponential"}})
    assert cfg["potential"] == {"family": "exponential"}


def test_merge_rejects_unknown_nested_key():
    with pytest.raises(ConfigError):
        merge({"grid": {"n": 1}}, {"grid": {"nn": 2}})


def test_dump_json_plain_values():
    import math

    import numpy as np

    text = dump_json({"b": np.float64(1.5), "a": [math.nan, np.int64(3)]})
    assert json.loads(text) == {"a": [None, 3], "b": 1.5}
    assert text.endswith("\n") and text.index('"a"') < text.index('"b"')
