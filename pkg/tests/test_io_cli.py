import csv
import json
import subprocess
import sys

import pytest

from compref import io
from compref.cli import main
from compref.scenarios import ConfigError, RunConfig, build_problem, toy2d
from compref.synthesis import synthesize

FROZEN = """
scenario = "affine"
plan = [[0], [1]]
tau = 1.0
steps = 10

[system]
A = [[0.0]]
B = [[0.0]]
E = [[0.0]]
X = [[0, 2]]
U = [[0, 1]]
W = [[0, 0]]

[grid]
cells_per_dim = 2

[[subsystems]]
Ic = [0]
J = [0]
controls = [0.0, 1.0]
"""


def _run(*argv):
    return main([str(a) for a in argv])


def test_artifacts_round_trip(tmp_path):
    pb = toy2d()
    syn = synthesize(pb)
    gc = syn.global_controller()
    io.write_artifacts(tmp_path, syn.results)
    back = io.read_artifacts(pb, tmp_path)
    for a, b in zip(gc.abstractions, back.abstractions):
        assert a.partitions == b.partitions
    for a, b in zip(gc.controllers, back.controllers):
        assert a.table == b.table
    # writing the re-imported controller gives the same bytes
    again = tmp_path / "again"
    io.write_artifacts(again, back)
    for name in ("partition_S1.csv", "controller_S1.csv", "partition_S2.csv", "controller_S2.csv"):
        assert (tmp_path / name).read_bytes() == (again / name).read_bytes()


def test_partition_rows_mark_validity(tmp_path):
    pb = toy2d()
    syn = synthesize(pb)
    io.write_artifacts(tmp_path, syn.results)
    with open(tmp_path / "partition_S2.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"step", "cell", "path", "low_1", "high_1", "valid"}
    final = [r for r in rows if r["step"] == "4"] or [r for r in rows if r["step"] == str(pb.spec.r)]
    assert all(r["valid"] == "1" for r in final)
    n_valid = sum(r["valid"] == "1" for r in rows if int(r["step"]) < pb.spec.r)
    assert n_valid == len(syn.results[1].controller)


def test_floats_are_written_exactly(tmp_path):
    path = io.write_traces(tmp_path / "t.csv", __import__("numpy").array([[[0.1 + 0.2, 1 / 3]]]))
    row = list(csv.DictReader(open(path)))[0]
    assert float(row["x_0"]) == 0.1 + 0.2 and float(row["x_1"]) == 1 / 3


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scenario": "toy1d", "colour": "blue"})
    with pytest.raises(ConfigError):
        build_problem(RunConfig(scenario="toy1d", params={"w_bound": 0.45, "nope": 1}))
    with pytest.raises(ConfigError):
        build_problem(RunConfig(scenario="toy1d", max_depth=-1))
    bad = tmp_path / "bad.toml"
    bad.write_text("scenario = ")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.toml")
    cfg = RunConfig.from_dict({"scenario": "affine", "plan": [[0], [5]], "system": {
        "A": [[-1.0]], "B": [[1.0]], "E": [[1.0]], "X": [[0, 2]], "U": [[0, 1]], "W": [[0, 0]]},
        "subsystems": [{"Ic": [0], "J": [0], "levels": [0.0, 1.0]}]})
    with pytest.raises(ConfigError):
        build_problem(cfg)


def test_ufad_overrides_from_config():
    pb = build_problem(RunConfig(scenario="ufad8", params={"doors": [[1, 3]], "c": 1e-14, "levels": [-1, 0]}))
    assert pb.system.f.params.doors == ((1, 3),)
    assert [len(c) for c in pb.controls] == [4, 4, 4, 2, 2]


def test_cli_synthesize_verify_simulate_stats(tmp_path, capsys):
    out = tmp_path / "toy"
    assert _run("synthesize", "--scenario", "toy2d", "--out", out) == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["status"] == "ok" and stats["evaluations"] == 307
    assert stats["subsystems"]["2"]["trace"] == [2, 1, 2, 1, 0, 0, 2, 1]
    assert "wall_time_s" in json.loads((out / "timing.json").read_text())
    assert _run("verify", "--scenario", "toy2d", "--out", out) == 0
    assert json.loads((out / "verify.json").read_text())["ok"]
    assert _run("simulate", "--scenario", "toy2d", "--out", out, "--trials", 40, "--seed", 5) == 0
    report = json.loads((out / "simulate.json").read_text())
    assert report["satisfied"] == report["trials"] == 40
    assert sum(1 for _ in open(out / "traces.csv")) == 1 + 40 * 4
    assert _run("stats", "--scenario", "toy2d", "--out", out) == 0
    table = json.loads((out / "table1.json").read_text())
    assert table["compositional_refinement"]["count"] == 307
    assert "[measured]" in capsys.readouterr().out


def test_cli_runs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        out = tmp_path / name
        assert _run("synthesize", "--scenario", "toy2d", "--out", out) == 0
        assert _run("simulate", "--scenario", "toy2d", "--out", out, "--trials", 20) == 0
        assert _run("verify", "--scenario", "toy2d", "--out", out) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        if f.name != "timing.json":
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_cli_unrealizable_exit_code(tmp_path, capsys):
    cfg = tmp_path / "frozen.toml"
    cfg.write_text(FROZEN)
    out = tmp_path / "frozen"
    assert _run("synthesize", "--config", cfg, "--out", out, "--max-depth", 3) == 2
    err = capsys.readouterr().err
    assert "subsystem 1" in err and "cell 0" in err
    stats = json.loads((out / "stats.json").read_text())
    assert stats["subsystems"]["1"]["status"] == "unrealizable"
    assert _run("synthesize", "--scenario", "toy2d", "--out", tmp_path / "d0", "--max-depth", 0) == 2


def test_cli_config_errors(tmp_path, capsys):
    assert _run("synthesize", "--scenario", "nowhere", "--out", tmp_path) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("bogus = 1\n")
    assert _run("verify", "--config", bad) == 1
    assert _run("simulate", "--scenario", "toy1d", "--out", tmp_path / "empty") == 1
    assert "configuration error" in capsys.readouterr().err


def test_cli_verify_fails_on_corrupted_controller(tmp_path):
    out = tmp_path / "toy1d"
    assert _run("synthesize", "--scenario", "toy1d", "--out", out) == 0
    path = out / "controller_S1.csv"
    lines = path.read_text().splitlines()
    head = lines[1].rsplit(",", 1)[0]
    lines[1] = head + ",0.0"
    path.write_text("\n".join(lines) + "\n")
    assert _run("verify", "--scenario", "toy1d", "--out", out) == 3
    report = json.loads((out / "verify.json").read_text())
    assert not report["nonblocking"]["ok"]
    assert not report["controller"]["ok"]


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "compref.cli", "stats", "--scenario", "ufad8", "--out", tmp_path],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "5.44e+05" in res.stdout and "not run" in res.stdout
