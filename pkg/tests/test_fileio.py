import json

import numpy as np
import pytest

from drillnav.errors import SessionFormatError
from drillnav.fileio import (CaptureSession, atomic_write_text, calibration_artifact, canonical_json, read_artifact,
                             read_json, read_session, result_artifact, sha256_text, write_json, write_session)
from drillnav.handeye import solve_handeye
from drillnav.navigate import Tool
from drillnav.simulate import (generate_handeye_captures, generate_pivot_captures, generate_tip_captures,
                               load_preset, make_scene, run_end_to_end)

TABLE1 = load_preset("table1")


@pytest.fixture(scope="module")
def sessions():
    scene = make_scene(9)
    return {
        "handeye": CaptureSession("handeye", generate_handeye_captures(scene, 8, TABLE1), {"seed": 9}),
        "pivot": CaptureSession("pivot", generate_pivot_captures(scene, 8, TABLE1)),
        "tip": CaptureSession("tip", generate_tip_captures(scene, 8, TABLE1, Tool.FLEXIBLE), {"tool": "flexible"}),
    }


@pytest.mark.parametrize("kind", ["handeye", "pivot", "tip"])
def test_session_round_trip_is_byte_identical(tmp_path, sessions, kind):
    path = tmp_path / f"{kind}.jsonl"
    write_session(path, sessions[kind])
    back = read_session(path, kind)
    assert back.dumps() == path.read_text()
    assert back.digest == sessions[kind].digest
    assert back.device == sessions[kind].device
    header = json.loads(path.read_text().splitlines()[0])
    assert header["n_records"] == 8 and header["digest"].startswith("sha256:")


def test_session_tamper_detected(tmp_path, sessions):
    path = tmp_path / "pivot.jsonl"
    write_session(path, sessions["pivot"])
    lines = path.read_text().splitlines()
    lines[3] = lines[3].replace("1", "2", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SessionFormatError, match="digest"):
        read_session(path)


def test_session_truncation_detected(tmp_path, sessions):
    path = tmp_path / "pivot.jsonl"
    write_session(path, sessions["pivot"])
    path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(SessionFormatError, match="declares"):
        read_session(path)


@pytest.mark.parametrize("text", ["", "not json\n", '{"kind": "pivot"}\n', '{"kind": "x", "schema_version": 1}\n',
                                  '{"kind": "pivot", "schema_version": 99}\n'])
def test_session_bad_headers(tmp_path, text):
    path = tmp_path / "bad.jsonl"
    path.write_text(text)
    with pytest.raises(SessionFormatError):
        read_session(path)


def test_session_kind_mismatch(tmp_path, sessions):
    path = tmp_path / "s.jsonl"
    write_session(path, sessions["pivot"])
    with pytest.raises(SessionFormatError, match="expected a handeye"):
        read_session(path, "handeye")
    with pytest.raises(SessionFormatError):
        CaptureSession("handeye", sessions["pivot"].records).dumps()


def test_artifact_round_trips(tmp_path, sessions):
    res = solve_handeye(sessions["handeye"].records)
    doc = result_artifact("handeye_result", res, {"handeye": sessions["handeye"].digest})
    path = tmp_path / "he.json"
    write_json(path, doc)
    assert read_artifact(path, "handeye_result") == doc
    assert canonical_json(read_json(path)) == canonical_json(doc)
    assert path.read_text() == canonical_json(doc) + "\n"
    with pytest.raises(SessionFormatError):
        read_artifact(path, "pivot_result")

    calib = run_end_to_end(1, TABLE1).calibration
    cal = calibration_artifact(calib, {"handeye": "external"}, "sim:seed=1")
    write_json(tmp_path / "cal.json", cal)
    first = (tmp_path / "cal.json").read_bytes()
    write_json(tmp_path / "cal.json", read_artifact(tmp_path / "cal.json", "calibration"))
    assert (tmp_path / "cal.json").read_bytes() == first


def test_read_json_invalid(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{")
    with pytest.raises(SessionFormatError):
        read_json(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    atomic_write_text(target, "hello\n")
    atomic_write_text(target, "world\n")
    assert target.read_text() == "world\n"
    assert sorted(p.name for p in target.parent.iterdir()) == ["out.txt"]


def test_canonical_json_full_precision():
    x = 0.1 + 0.2
    assert json.loads(canonical_json({"b": x, "a": [np.float64(1.0) / 3]}))["b"] == x
    assert canonical_json({"b": 1, "a": 2}).index('"a"') < canonical_json({"b": 1, "a": 2}).index('"b"')
    assert sha256_text("abc") == "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
