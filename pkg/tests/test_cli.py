import json
import re
import subprocess
import sys

import numpy as np
import pytest

from drillnav.cli import OUT_DIR_ENV
from drillnav.fileio import read_session, read_trajectory_csv
from helpers import full_cli_pipeline, run_cli_capture, tree_bytes


def recovery_errors(text):
    return [float(v) for v in re.findall(r"recovery error: (?:position )?([0-9.e+-]+)", text)] + \
        [float(v) for v in re.findall(r"rotation ([0-9.e+-]+) deg", text)]


def test_noiseless_handeye_closed_loop(tmp_path, capsys):
    code, _, err = run_cli_capture(capsys, "simulate", "--seed", 7, "--noise-preset", "zero", "--out", tmp_path)
    assert code == 0, err
    code, out, err = run_cli_capture(capsys, "calibrate-handeye", tmp_path / "handeye.jsonl",
                                     "--truth", tmp_path / "scene.json", "--out", tmp_path / "he.json")
    assert code == 0, err
    assert "X recovery error" in out
    errs = recovery_errors(out)
    assert len(errs) == 4 and max(errs) <= 1e-8


def test_noiseless_pivot_and_tip_closed_loop(tmp_path, capsys):
    run_cli_capture(capsys, "simulate", "--seed", 3, "--noise-preset", "zero", "--captures-only", "--out", tmp_path)
    assert not (tmp_path / "procedure.json").exists()
    run_cli_capture(capsys, "calibrate-handeye", tmp_path / "handeye.jsonl", "--out", tmp_path / "he.json")
    code, out, _ = run_cli_capture(capsys, "calibrate-pivot", tmp_path / "pivot.jsonl",
                                   "--truth", tmp_path / "scene.json", "--out", tmp_path / "pv.json")
    assert code == 0 and max(recovery_errors(out)) <= 1e-8
    for tool in ("rigid", "flexible"):
        code, out, err = run_cli_capture(capsys, "calibrate-tip", tmp_path / f"tip_{tool}.jsonl",
                                         "--handeye", tmp_path / "he.json", "--pivot", tmp_path / "pv.json",
                                         "--truth", tmp_path / "scene.json", "--out", tmp_path / f"{tool}.json")
        assert code == 0, err
        assert f"{tool} tip recovery error" in out and max(recovery_errors(out)) <= 1e-8


@pytest.mark.parametrize("preset", ["zero", "table1"])
def test_locked_pivot_session_exits_2(tmp_path, capsys, preset):
    run_cli_capture(capsys, "simulate", "--seed", 1, "--noise-preset", preset, "--capture-mode", "locked",
                    "--out", tmp_path)
    code, out, err = run_cli_capture(capsys, "calibrate-pivot", tmp_path / "pivot.jsonl")
    assert code == 2
    assert "DegenerateGeometry" in err
    code, _, err = run_cli_capture(capsys, "calibrate-handeye", tmp_path / "handeye.jsonl")
    assert code == 2 and "InsufficientMotion" in err


def test_json_errors(tmp_path, capsys):
    run_cli_capture(capsys, "simulate", "--seed", 1, "--noise-preset", "zero", "--capture-mode", "single_axis",
                    "--out", tmp_path)
    code, _, err = run_cli_capture(capsys, "--json-errors", "calibrate-pivot", tmp_path / "pivot.jsonl")
    doc = json.loads(err)
    assert code == 2 and doc["error"] == "DegenerateGeometry" and doc["exit_code"] == 2


def test_bad_inputs_exit_2(tmp_path, capsys):
    code, _, err = run_cli_capture(capsys, "calibrate-pivot", tmp_path / "missing.jsonl")
    assert code == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text("garbage\n")
    assert run_cli_capture(capsys, "calibrate-pivot", bad)[0] == 2
    assert run_cli_capture(capsys, "plan", "--arc-angle", 150, "--out", tmp_path / "p.csv")[0] == 2
    assert run_cli_capture(capsys, "report", tmp_path / "empty_dir_that_does_not_exist")[0] == 2


def test_wrong_session_kind_exit_2(tmp_path, capsys):
    run_cli_capture(capsys, "simulate", "--seed", 2, "--noise-preset", "zero", "--captures-only", "--out", tmp_path)
    code, _, err = run_cli_capture(capsys, "calibrate-handeye", tmp_path / "pivot.jsonl")
    assert code == 2 and "expected a handeye session" in err


def test_tip_requires_digitizer_offset(tmp_path, capsys):
    run_cli_capture(capsys, "simulate", "--seed", 2, "--noise-preset", "zero", "--captures-only", "--out", tmp_path)
    run_cli_capture(capsys, "calibrate-handeye", tmp_path / "handeye.jsonl", "--out", tmp_path / "he.json")
    code, _, err = run_cli_capture(capsys, "calibrate-tip", tmp_path / "tip_rigid.jsonl",
                                   "--handeye", tmp_path / "he.json")
    assert code == 2 and "digitizer tip offset" in err


def test_report_table_over_three_runs(tmp_path, capsys):
    code, _, err = run_cli_capture(capsys, "simulate", "--seed", 10, "--runs", 3, "--out", tmp_path / "runs")
    assert code == 0, err
    code, out, err = run_cli_capture(capsys, "report", tmp_path / "runs", "--out", tmp_path / "report.md")
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0] == "| Error | Rigid Drill Tip | Flexible Drill Tip |"
    assert [ln.split(" |")[0] for ln in lines[2:]] == ["| Position", "| Roll", "| Pitch", "| Yaw"]
    assert re.fullmatch(r"\| Position \| [0-9.]+ ± [0-9.]+ mm \| [0-9.]+ ± [0-9.]+ mm \|", lines[2])
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["metadata"]["seed_range"] == [10, 12] and doc["metadata"]["n_runs"] == 3
    assert (tmp_path / "report.md").read_text() == out


def test_simulate_outputs(tmp_path, capsys):
    code, out, _ = run_cli_capture(capsys, "simulate", "--seed", 4, "--out", tmp_path)
    assert code == 0 and "tip error rigid" in out
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"scene.json", "handeye.jsonl", "pivot.jsonl", "tip_rigid.jsonl", "tip_flexible.jsonl",
                     "marking.json", "calibration.json", "marked.json", "plan.csv", "drilled.csv", "audit.jsonl",
                     "procedure.json"}
    assert read_session(tmp_path / "tip_flexible.jsonl").device["tool"] == "flexible"
    assert len((tmp_path / "audit.jsonl").read_text().splitlines()) == 6
    header, pts = read_trajectory_csv(tmp_path / "drilled.csv")
    assert len(pts) > 100
    proc = json.loads((tmp_path / "procedure.json").read_text())
    sessions = {"handeye", "pivot", "tip_rigid", "tip_flexible"}
    assert set(proc["session_digests"]) == sessions
    cal = json.loads((tmp_path / "calibration.json").read_text())
    assert set(cal["provenance"]["session_digests"]) == sessions


def test_mark_with_calibration(tmp_path, capsys):
    run_cli_capture(capsys, "simulate", "--seed", 5, "--noise-preset", "zero", "--out", tmp_path)
    code, out, err = run_cli_capture(capsys, "mark", "--digitizer-pose", tmp_path / "marking.json",
                                     "--calibration", tmp_path / "calibration.json", "--out", tmp_path / "m.json")
    assert code == 0, err
    assert "offset from pivot" in out
    mine = json.loads((tmp_path / "m.json").read_text())
    sim = json.loads((tmp_path / "marked.json").read_text())
    for tool in ("rigid", "flexible"):
        np.testing.assert_allclose(mine["commanded_eef_in_S"][tool]["t_mm"], sim["commanded_eef_in_S"][tool]["t_mm"],
                                   atol=1e-9)


def test_plan_command(tmp_path, capsys):
    code, out, _ = run_cli_capture(capsys, "plan", "--pilot-depth", 0, "--arc-angle", 90, "--out", tmp_path / "p.csv")
    assert code == 0
    assert "endpoint [69.5, 0.0, -69.5]" in out
    header, pts = read_trajectory_csv(tmp_path / "p.csv")
    assert header["arc_radius_mm"] == 69.5 and header["frame"] == "vertebra"


def test_out_dir_environment_variable(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path))
    code, _, _ = run_cli_capture(capsys, "plan")
    assert code == 0 and (tmp_path / "plan.csv").exists()


def test_parallel_batch_matches_serial(tmp_path, capsys):
    run_cli_capture(capsys, "simulate", "--seed", 20, "--runs", 3, "--out", tmp_path / "serial")
    run_cli_capture(capsys, "simulate", "--seed", 20, "--runs", 3, "--jobs", 3, "--out", tmp_path / "parallel")
    assert tree_bytes(tmp_path / "serial") == tree_bytes(tmp_path / "parallel")


def test_every_command_is_byte_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    out_a = full_cli_pipeline(capsys, a)
    out_b = full_cli_pipeline(capsys, b)
    assert out_a == out_b
    assert tree_bytes(a) == tree_bytes(b)


def test_module_entry_point_and_help(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "drillnav", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "calibrate-handeye" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "drillnav", "calibrate-pivot", str(tmp_path / "nope.jsonl")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
