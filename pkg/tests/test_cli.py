from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from coopbranch import cli
from coopbranch.diagram import pbm_bytes, read_pbm, render_diagram, svg_bytes
from coopbranch.dynamics import simulate_direct
from coopbranch.lattice import full_configuration


def run(args, tmp_path, name="out"):
    prefix = tmp_path / name
    code = cli.main(args + ["--out", str(prefix)])
    return code, prefix


def read_csv(path):
    text = path.read_bytes().decode("ascii")
    lines = text.split("\r\n")
    assert lines[0].startswith("# schema=coopbranch-csv/1")
    return list(csv.reader(lines[1:-1]))


def test_simulate_flags_to_config():
    c = cli.parse_config(["simulate", "--lambda", "2.333", "--sites", "700", "--horizon", "500",
                          "--seed", "42"])
    assert (c.command, c["lambda"], c["sites"], c["horizon"], c["seed"]) == ("simulate", 2.333, 700, 500.0, 42)


def test_flag_overrides_config_file(tmp_path):
    f = tmp_path / "run.conf"
    f.write_text("# comment\nlambda = 1.5\nsites = 64  # trailing\nhorizon=3\n")
    c = cli.parse_config(["simulate", "--config", str(f), "--lambda", "2.0"])
    assert c["lambda"] == 2.0 and c["sites"] == 64 and c["horizon"] == 3.0


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    f = tmp_path / "run.conf"
    f.write_text("lambda = 1\ncolour = red\n")
    assert cli.main(["simulate", "--config", str(f)]) == 2
    assert "colour" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["simulate", "--lambda", "-1"], ["scan", "--grid", "3:2:0.1"],
                                  ["couple-check", "--p", "1.5"], ["bogus"],
                                  ["meeting", "--walkers", "4"], ["simulate", "--sites", "x"]])
def test_usage_errors_exit_2(args):
    assert cli.main(args) == 2


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("COOPBRANCH_SEED", "77")
    assert cli.parse_config(["meeting"])["seed"] == 77
    assert cli.parse_config(["meeting", "--seed", "3"])["seed"] == 3
    monkeypatch.delenv("COOPBRANCH_SEED")
    assert cli.parse_config(["meeting"])["seed"] == 0


@pytest.mark.parametrize("args", [
    ["meeting", "--walkers", "2", "--starts", "0,3", "--times", "1,2"],
    ["scan", "--grid", "2.0:3.0:0.5", "--seed", "5"],
    ["decay", "--times", "50:500:7", "--observable", "survival"],
    ["couple-check", "--p", "0.3", "--p-prime", "0.9"],
])
def test_config_text_round_trip(args):
    c = cli.parse_config(args)
    assert cli.config_from_text(c.command, c.to_text()).values == c.values


def test_scan_grid_parsing():
    c = cli.parse_config(["scan", "--grid", "2.0:3.0:0.1"])
    assert c["grid"] == [2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 2.6, 2.7, 2.8, 2.9, 3.0]


def test_scan_csv_schema_and_determinism(tmp_path):
    args = ["scan", "--grid", "2.0:2.2:0.1", "--sites", "40", "--horizon", "20",
            "--replicas", "4", "--seed", "9"]
    code, a = run(args, tmp_path, "a")
    assert code == 0
    code, b = run(args, tmp_path, "b")
    assert code == 0
    ca, cb = (p.with_suffix(".csv").read_bytes() for p in (a, b))
    assert ca == cb
    rows = read_csv(a.with_suffix(".csv"))
    assert rows[0][:5] == ["lambda", "theta", "theta_se", "psi", "psi_se"]
    assert len(rows) == 4
    ja = json.loads(a.with_suffix(".json").read_text())
    jb = json.loads(b.with_suffix(".json").read_text())
    ja["config"].pop("out"), jb["config"].pop("out")
    assert ja == jb and ja["schema"] == "coopbranch-summary/1"
    assert "wall_seconds" in json.loads((tmp_path / "a.timing.json").read_text())


def test_meeting_summary(tmp_path):
    code, p = run(["meeting", "--walkers", "3", "--replicas", "100000", "--seed", "1"], tmp_path)
    assert code == 0
    res = json.loads(p.with_suffix(".json").read_text())["results"]
    assert abs(res["mean_truncated"] - 1.0) < 3 * res["mean_stderr"]
    assert res["mean_exact"] == 1.0 and res["starts"] == [0, 1, 2]


def test_meeting_rejects_mismatched_starts(tmp_path):
    code, _ = run(["meeting", "--walkers", "3", "--starts", "0,1"], tmp_path)
    assert code == 2


def test_runtime_failure_writes_partial(tmp_path, capsys):
    code, p = run(["decay", "--times", "5,6,7", "--replicas", "2", "--sites", "50"], tmp_path)
    assert code == 1
    assert (tmp_path / "out.json.partial").exists() and (tmp_path / "out.csv.partial").exists()
    assert not (tmp_path / "out.json").exists()
    assert "decade" in capsys.readouterr().err


def test_simulate_with_diagram_is_deterministic(tmp_path):
    args = ["simulate", "--lambda", "2.333", "--sites", "70", "--horizon", "10",
            "--samples", "20", "--seed", "42"]
    outs = []
    for name in ("x", "y"):
        d = tmp_path / f"{name}.pbm"
        code, p = run(args + ["--diagram", str(d)], tmp_path, name)
        assert code == 0
        outs.append((p.with_suffix(".csv").read_bytes(), d.read_bytes()))
    assert outs[0] == outs[1]
    img = read_pbm(tmp_path / "x.pbm")
    assert img.shape == (21, 70) and img[0].all()


def test_diagram_command_formats(tmp_path):
    pytest.importorskip("matplotlib")
    code, p = run(["diagram", "--sites", "30", "--horizon", "5", "--samples", "10",
                   "--svg", "yes", "--png", "yes"], tmp_path, "fig")
    assert code == 0
    for suf in (".pbm", ".svg", ".png"):
        assert (tmp_path / f"fig{suf}").stat().st_size > 0


def test_couple_check_and_dual_commands(tmp_path):
    code, p = run(["couple-check", "--replicas", "2", "--sites", "40", "--horizon", "5"], tmp_path, "c")
    assert code == 0
    assert json.loads(p.with_suffix(".json").read_text())["results"]["all_clear"]
    code, p = run(["dual", "--replicas", "3", "--sites", "12", "--horizon", "2"], tmp_path, "d")
    assert code == 0
    assert json.loads(p.with_suffix(".json").read_text())["results"]["violations"] == 0


def test_csv_quoting_is_rfc4180():
    text = cli.csv_text("x", ["a", "b"], [{"a": 'he said "hi"', "b": 1.5}, {"a": "p,q", "b": None}])
    lines = text.split("\r\n")
    assert lines[2] == '"he said ""hi""",1.5' and lines[3] == '"p,q",'


# --- diagram rendering ----------------------------------------------------------------------


def test_pbm_layout_and_round_trip(tmp_path):
    rows = np.zeros((3, 10), np.uint8)
    rows[1, [0, 9]] = 1
    data = pbm_bytes(rows)
    assert data.startswith(b"P4\n10 3\n") and len(data) == len(b"P4\n10 3\n") + 3 * 2
    assert data[-4:] == bytes([0b10000000, 0b01000000, 0, 0])
    render_diagram(rows, tmp_path / "r.pbm")
    assert np.array_equal(read_pbm(tmp_path / "r.pbm"), rows)


def test_empty_row_is_white():
    rows = np.zeros((2, 12), np.uint8)
    assert pbm_bytes(rows).endswith(b"\x00" * 4)
    assert b"<rect x=" not in svg_bytes(rows)


def test_full_start_gives_black_first_row(tmp_path):
    tr = simulate_direct(full_configuration(70), 7 / 3, np.linspace(0, 5, 11), seed=1)
    a = render_diagram(tr, tmp_path / "a.pbm").read_bytes()
    b = render_diagram(simulate_direct(full_configuration(70), 7 / 3, np.linspace(0, 5, 11),
                                       seed=1), tmp_path / "b.pbm").read_bytes()
    assert a == b
    assert read_pbm(tmp_path / "a.pbm")[0].all()


def test_diagram_rejects_uneven_grid_and_format(tmp_path):
    tr = simulate_direct(full_configuration(20), 1.0, [0.0, 1.0, 3.0], seed=1)
    with pytest.raises(ValueError):
        render_diagram(tr, tmp_path / "x.pbm")
    with pytest.raises(ValueError):
        render_diagram(np.zeros((2, 2)), tmp_path / "x.gif")
