import json

import pytest

from rcuc.cli import main
from rcuc.grid import case_to_dict

from cases import short_case6


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "case.json").write_text(json.dumps(case_to_dict(short_case6())))
    cfg = {"case": str(d / "case.json"), "sample_count": 10, "epochs": 20, "hidden_layers": [5, 5],
           "constrained_hours": [1, 2], "time_limit_s": 120.0, "seed": 7}
    (d / "config.json").write_text(json.dumps(cfg))
    return d


def run(workspace, *argv):
    return main([argv[0], "--config", str(workspace / "config.json"), *argv[1:]])


def test_no_command_and_unknown_command(capsys):
    assert main([]) == 1
    assert main(["fly"]) == 1
    assert "usage" in capsys.readouterr().err


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_bad_inputs_exit_one(workspace, tmp_path):
    assert main(["solve", "tscuc", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text(json.dumps({"colour": 1}))
    assert main(["solve", "tscuc", "--config", str(tmp_path / "bad.json")]) == 1
    assert run(workspace, "solve", "tscuc", "--hours", "30") == 1
    assert run(workspace, "solve", "tscuc", "--rocof-lim", "-1") == 1
    assert main(["solve", "tscuc", "--case", str(tmp_path / "nope.json")]) == 1


def test_solver_failure_exits_two(workspace, tmp_path):
    assert run(workspace, "solve", "tscuc", "--time-limit", "0", "--out", str(tmp_path)) == 2


def test_full_workflow(workspace, tmp_path, capsys):
    out = str(tmp_path)
    assert run(workspace, "gen-data", "--out", out) == 0
    assert (tmp_path / "dataset.csv").exists()
    assert run(workspace, "train", "--out", out) == 0
    assert "validation r2" in capsys.readouterr().out
    assert run(workspace, "solve", "slnn", "--rocof-lim", "0.5", "--hours", "1-2", "--out", out) == 0
    assert (tmp_path / "schedule_slnn-rcuc.json").exists()
    assert "mode" in (tmp_path / "selection_slnn-rcuc.txt").read_text()
    capsys.readouterr()
    assert run(workspace, "verify", str(tmp_path / "schedule_slnn-rcuc.json"), "--out", out) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split(":")[0] for ln in lines] == ["hour  1", "hour  2"]
    assert (tmp_path / "traces" / "hour1.csv").exists()


def test_benchmark_twice_identical(workspace, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(workspace, "benchmark", "--out", str(a)) == 0
    assert run(workspace, "benchmark", "--out", str(b)) == 0
    for name in ("dataset.csv", "weights.json", "report.md", "report.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert run(workspace, "report", "--out", str(a)) == 0
