import json
import subprocess
import sys

import numpy as np
import pytest

from irs_wpcn.channel_model import load_channels
from irs_wpcn.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from irs_wpcn.system_model import Allocation

SCENARIO = {"K": 2, "L": 1, "M": 2, "N_per_irs": 2, "d_hap": -2.0}


@pytest.fixture
def channel_file(tmp_path):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(SCENARIO))
    out = tmp_path / "ch.json"
    assert main(["gen-channels", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == EXIT_OK
    return out


def test_gen_channels_stores_config_and_is_deterministic(tmp_path, channel_file):
    ch, cfg = load_channels(channel_file)
    assert cfg.K == 2 and cfg.seed == 3 and ch.N == 2
    cfg_path = tmp_path / "scenario.json"
    again = tmp_path / "again.json"
    main(["gen-channels", "--config", str(cfg_path), "--seed", "3", "--out", str(again)])
    assert again.read_bytes() == channel_file.read_bytes()


def test_optimize_rerun_is_identical(tmp_path, channel_file):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["optimize", "--scheme", "asy", "--channels", str(channel_file), "--out", str(out)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    res = json.loads(a.read_text())
    assert res["scheme"] == "asy" and res["feasibility"]["passed"]
    assert "wall_time" not in res


def test_optimize_no_irs(tmp_path, channel_file):
    out = tmp_path / "r.json"
    assert main(["optimize", "--scheme", "tdma", "--channels", str(channel_file), "--no-irs", "--out", str(out)]) == 0
    alloc = Allocation.from_dict(json.loads(out.read_text())["allocation"])
    assert np.all(alloc.v[:, :-1] == 0)


def test_optimize_with_optimizer_file_and_timing(tmp_path, channel_file):
    opt = tmp_path / "opt.json"
    opt.write_text(json.dumps({"eps_outer": 1e-2, "max_outer": 5}))
    out = tmp_path / "r.json"
    args = ["optimize", "--scheme", "syn", "--channels", str(channel_file), "--optimizer", str(opt), "--timing"]
    assert main(args + ["--out", str(out)]) == EXIT_OK
    res = json.loads(out.read_text())
    assert res["iterations"] <= 5 and res["wall_time"] > 0


def test_trace_is_non_decreasing_column(tmp_path, channel_file):
    out = tmp_path / "trace.txt"
    assert main(["trace", "--scheme", "syn", "--channels", str(channel_file), "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "objective"
    values = np.array([float(x) for x in lines[1:]])
    assert values.size >= 2
    assert np.all(np.diff(values) >= -1e-9)


def test_sweep_cardinality(tmp_path):
    spec = tmp_path / "sweep.json"
    spec.write_text(
        json.dumps(
            {
                "parameter": "d_hap",
                "values": [-1.0, 2.0],
                "trials": 2,
                "base": SCENARIO,
                "schemes": ["tdma", "syn"],
                "baselines": ["with_irs", "no_irs"],
            }
        )
    )
    out = tmp_path / "out.csv"
    assert main(["sweep", "--spec", str(spec), "--out-csv", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("scheme,baseline,value,trial,seed,")
    assert len(lines) == 1 + 2 * 2 * 2 * 2


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["optimize", "--bogus"]) == EXIT_USAGE
    assert main(["optimize", "--scheme", "fdma", "--channels", "x", "--out", "y"]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gen-channels", "--config", str(bad), "--out", str(tmp_path / "o.json")]) == EXIT_USAGE


def test_mismatched_config_is_usage_error(tmp_path, channel_file):
    cfg = tmp_path / "other.json"
    cfg.write_text(json.dumps({**SCENARIO, "K": 3}))
    args = ["optimize", "--scheme", "asy", "--channels", str(channel_file), "--config", str(cfg)]
    assert main(args + ["--out", str(tmp_path / "r.json")]) == EXIT_USAGE


def test_runtime_errors(tmp_path):
    missing = tmp_path / "missing.json"
    assert main(["optimize", "--scheme", "asy", "--channels", str(missing), "--out", str(tmp_path / "r")]) == EXIT_RUNTIME
    cfg = tmp_path / "neg.json"
    cfg.write_text(json.dumps({"K": 0}))
    assert main(["gen-channels", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == EXIT_RUNTIME


def test_console_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "irs_wpcn.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen-channels" in proc.stdout
