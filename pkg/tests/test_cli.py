import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatsphere.cli import RunConfig, main, parse_config, save_config
from flatsphere.errors import UsageError
from flatsphere.hermite import hermite_poly
from flatsphere.io import format_value, read_csv, sha256_of, write_csv


def test_defaults_and_overrides(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"p": 3, "s0": 11, "d6": [0.1, 0, 0, 0, 0, 0]}))
    cfg = parse_config(["simulate", "--config", str(cfg_file), "--s0", "12"])
    assert cfg.p == 3.0 and cfg.s0 == 12.0 and cfg.d6[0] == 0.1
    assert cfg.L == RunConfig().L


def test_config_round_trip(tmp_path):
    cfg = parse_config(["shoot", "--p", "2.5", "--d6", "0.1,-0.2,0,0,0,0.3", "--budget", "7"])
    path = save_config(cfg, str(tmp_path / "cfg.json"))
    again = parse_config(["shoot", "--config", path])
    assert again == cfg


@pytest.mark.parametrize("argv,key", [
    (["simulate", "--p", "0.5"], "p"),
    (["simulate", "--p", "6", "--d", "3"], "p"),
    (["simulate", "--d6", "1,2,3"], "d6"),
    (["simulate", "--d6", "3,0,0,0,0,0"], "d6"),
    (["simulate", "--budget", "1.5"], "budget"),
])
def test_usage_errors_name_the_key(argv, key):
    with pytest.raises(UsageError) as info:
        parse_config(argv)
    assert str(info.value).startswith(key)


def test_unknown_config_key(tmp_path, capsys):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg_file)]) == 2
    assert "unknown key: bogus" in capsys.readouterr().err


def test_bad_flag_is_usage_exit():
    assert main(["simulate", "--nope", "1"]) == 2
    assert main(["frobnicate"]) == 2


def test_header_only_csv(tmp_path):
    path = write_csv(str(tmp_path / "e.csv"), ["a", "b"], [])
    header, body = read_csv(path)
    assert header == ["a", "b"] and body == []


@settings(max_examples=50)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(format_value(x)) == x


def test_profile_table(tmp_path):
    out = tmp_path / "prof"
    assert main(["profile-table", "--s-values", "10,12", "--ny", "11", "--out", str(out)]) == 0
    header, body = read_csv(str(out / "profile.csv"))
    assert header == ["y", "s", "phi", "f", "V", "R"]
    assert len(body) == 22
    side = json.loads((out / "profile.json").read_text())
    assert side["files"]["profile.csv"] == sha256_of(str(out / "profile.csv"))


def test_spectral_recovers_single_mode(tmp_path):
    y = np.linspace(-20, 20, 4001)
    v = 0.25 * hermite_poly(4)(y)
    src = tmp_path / "in.csv"
    write_csv(str(src), ["y", "value"], [[a, b] for a, b in zip(y, v)])
    out = tmp_path / "spec"
    assert main(["spectral", "--input", str(src), "--out", str(out)]) == 0
    _, body = read_csv(str(out / "spectral.csv"))
    coef = {int(r[0]): float(r[1]) for r in body}
    assert coef[4] == pytest.approx(0.25, abs=1e-8)
    assert all(abs(c) < 1e-8 for m, c in coef.items() if m != 4)


def test_spectral_needs_input():
    assert main(["spectral"]) == 2


def test_verify_writes_report(tmp_path):
    path = tmp_path / "rep" / "report.json"
    assert main(["verify", "--out", str(path)]) == 0
    rep = json.loads(path.read_text())
    verdicts = {r["verdict"] for r in rep["rows"]}
    assert "match" in verdicts and "mismatch" in verdicts
    header, body = read_csv(str(path.with_suffix(".csv")))
    assert header == ["claim_id", "kind", "printed", "measured", "verdict"]
    assert len(body) == len(rep["rows"])


def test_simulate_short(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--s-end", "10.2", "--L", "10", "--dy", "0.1",
                 "--out", str(out), "--plot", "true"]) == 0
    header, body = read_csv(str(out / "trajectory.csv"))
    assert header[0] == "s" and header[-1] == "in_set"
    assert float(body[-1][0]) == pytest.approx(10.2)
    assert (out / "trajectory_modes.svg").exists()


def test_shoot_budget_exhausted(tmp_path):
    out = tmp_path / "sh"
    code = main(["shoot", "--budget", "2", "--s-target", "10.3", "--L", "10", "--dy", "0.1",
                 "--out", str(out)])
    assert code == 4
    lines = (out / "history.jsonl").read_text().splitlines()
    assert 1 <= len(lines) <= 2
    best = json.loads((out / "best.json").read_text())
    assert len(best["d6"]) == 6
