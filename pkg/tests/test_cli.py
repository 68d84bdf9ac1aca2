import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nhscore.cli import ConfigError, fmt, main, parse_range

HN_HEADER = ["chi", "V", "D_op", "D_frob", "D_unnorm", "SCn_max", "SCS_max", "SCI_max",
             "Gn_scaled", "GS_scaled", "delta01", "ep_flag"]


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_range():
    assert parse_range("0:1:3") == [0.0, 0.5, 1.0]
    assert parse_range("1e-1:1e5:49log")[0] == 0.1
    assert parse_range("1e-1:1e5:49log")[-1] == 1e5
    assert len(parse_range("1e-1:1e5:49log")) == 49
    assert parse_range("2.5") == [2.5]
    for bad in ("0:1", "a:b:c", "0:1:0", "0:10:3log"):
        with pytest.raises(ConfigError):
            parse_range(bad)


def test_number_format_round_trips():
    for x in (0.1, 1 / 3, 2.0**-40, 1e300):
        assert float(fmt(x)) == x
    assert fmt(3) == "3"
    assert fmt(np.nan) == "nan"


def test_bell_sweep(tmp_path):
    out = tmp_path / "bell.csv"
    assert main(["bell-sweep", "--alphabar", "0:1:5", "--realizations", "40", "--seed", "7",
                 "--out", str(out)]) == 0
    rows = read(out)
    assert rows[0] == ["alphabar", "D_min", "D_max"]
    assert len(rows) == 6
    assert float(rows[1][1]) == 0.0
    meta = json.loads((tmp_path / "bell.csv.meta.json").read_text())
    assert meta["seed"] == 7
    assert meta["status"] == "ok"
    assert meta["config"]["realizations"] == 40


def test_rerun_is_byte_identical(tmp_path):
    args = ["hn-sweep", "--N", "6", "--chi", "0:3:3", "--V", "1e-1:1e3:4log", "--seed", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a), "--threads", "1"]) == 0
    assert main(args + ["--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read(a)
    assert rows[0] == HN_HEADER
    assert len(rows) == 1 + 12


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alphabar": "0:1:3", "realizations": 5, "seed": 3}))
    out = tmp_path / "o.csv"
    assert main(["bell-sweep", "--config", str(cfg), "--realizations", "6", "--out", str(out)]) == 0
    meta = json.loads((tmp_path / "o.csv.meta.json").read_text())
    assert meta["config"]["realizations"] == 6
    assert meta["config"]["seed"] == 3
    # the echoed config reproduces the run
    echo = {k: v for k, v in meta["config"].items() if k not in ("out", "threads")}
    cfg2 = tmp_path / "echo.json"
    cfg2.write_text(json.dumps(echo))
    out2 = tmp_path / "o2.csv"
    assert main(["bell-sweep", "--config", str(cfg2), "--out", str(out2)]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"realisations": 5}))
    assert main(["bell-sweep", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
    assert "realisations" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["bell-sweep", "--realizations", "0"],
    ["bell-sweep", "--alphabar", "0:2:3"],
    ["hn-sweep", "--N", "5"],
    ["hn-sweep", "--ep-policy", "ignore"],
    ["bell-evolve", "--alpha", "1.5"],
    ["trajectory-check", "--model", "ising"],
    ["fss", "--N-list", "4 6"],
    ["no-such-command"],
])
def test_config_errors(tmp_path, args):
    assert main(args + ["--out", str(tmp_path / "x.csv")] if args[0] != "no-such-command" else args) == 1


def test_missing_config_file_is_io_error(tmp_path):
    assert main(["bell-sweep", "--config", str(tmp_path / "nope.json")]) == 3


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["bell-sweep", "--alphabar", "0:1:2", "--realizations", "2",
                 "--out", str(blocker / "sub" / "x.csv")]) == 3


def test_defective_cell_gives_numerical_exit(tmp_path):
    out = tmp_path / "d.csv"
    code = main(["hn-sweep", "--N", "12", "--chi", "5.4", "--V", "1e5", "--out", str(out)])
    rows = read(out)
    assert len(rows) == 2
    meta = json.loads((tmp_path / "d.csv.meta.json").read_text())
    if code == 2:
        assert meta["cell_errors"]
        assert float(rows[1][2]) < 0.01
    else:
        assert code == 0 and meta["status"] == "ok"


def test_other_commands(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["bell-evolve", "--times", "0:10:11", "--out", str(out)]) == 0
    rows = read(out)
    assert rows[0] == ["t", "SC_purity", "SC_vne"]
    assert float(rows[1][1]) == 0.0
    out = tmp_path / "k.csv"
    assert main(["delta01", "--N", "6", "--V", "1:1e3:9log", "--out", str(out)]) == 0
    meta = json.loads((tmp_path / "k.csv.meta.json").read_text())
    assert "kink_V" in meta
    out = tmp_path / "t.csv"
    assert main(["trajectory-check", "--dt", "2e-3 1e-3", "--out", str(out)]) == 0
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert meta["error_ratios"][0] == pytest.approx(2.0, rel=0.2)


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    r = subprocess.run([sys.executable, "-m", "nhscore", "bell-sweep", "--alphabar", "0:1:2",
                        "--realizations", "3", "--out", str(out)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert out.exists()
