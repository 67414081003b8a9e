"""Capture sessions, result artifacts and trajectory CSVs.

All JSON is written canonically (sorted keys, compact separators, shortest
round-trip float repr) so identical inputs give identical bytes, and every
file is replaced atomically.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from . import __version__
from .errors import SessionFormatError
from .handeye import HandEyeSample
from .pointcal import PivotSample, TipSample
from .trajectory import Trajectory

SCHEMA_VERSION = 1
SESSION_KINDS = {"handeye": HandEyeSample, "pivot": PivotSample, "tip": TipSample}

PathLike = Union[str, os.PathLike]


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def sha256_text(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: PathLike, obj: Any) -> None:
    atomic_write_text(path, canonical_json(obj) + "\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SessionFormatError(f"{path}: invalid JSON ({exc})") from None


@dataclass
class CaptureSession:
    kind: str
    records: list
    device: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def record_lines(self) -> list[str]:
        bad = [r for r in self.records if not isinstance(r, SESSION_KINDS[self.kind])]
        if bad:
            raise SessionFormatError(f"{self.kind} session holds {type(bad[0]).__name__} records")
        return [canonical_json(r.to_dict()) for r in self.records]

    @property
    def digest(self) -> str:
        return sha256_text("\n".join(self.record_lines()))

    def dumps(self) -> str:
        lines = self.record_lines()
        header = {"schema_version": self.schema_version, "kind": self.kind, "device": self.device,
                  "n_records": len(lines), "digest": sha256_text("\n".join(lines))}
        return "\n".join([canonical_json(header), *lines]) + "\n"

    @classmethod
    def loads(cls, text: str, source: str = "<session>") -> CaptureSession:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise SessionFormatError(f"{source}: empty session file")
        try:
            header = json.loads(lines[0])
            kind = header["kind"]
            version = int(header["schema_version"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SessionFormatError(f"{source}: bad session header ({exc})") from None
        if kind not in SESSION_KINDS:
            raise SessionFormatError(f"{source}: unknown session kind {kind!r}")
        if version != SCHEMA_VERSION:
            raise SessionFormatError(f"{source}: unsupported schema_version {version}")
        body = lines[1:]
        if header.get("n_records") != len(body):
            raise SessionFormatError(f"{source}: header declares {header.get('n_records')} records, found {len(body)}")
        if header.get("digest") != sha256_text("\n".join(body)):
            raise SessionFormatError(f"{source}: content digest mismatch")
        try:
            records = [SESSION_KINDS[kind].from_dict(json.loads(ln)) for ln in body]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SessionFormatError(f"{source}: bad {kind} record ({exc})") from None
        return cls(kind, records, header.get("device", {}), version)


def write_session(path: PathLike, session: CaptureSession) -> None:
    atomic_write_text(path, session.dumps())


def read_session(path: PathLike, expect_kind: str | None = None) -> CaptureSession:
    with open(path, encoding="utf-8") as fh:
        session = CaptureSession.loads(fh.read(), str(path))
    if expect_kind is not None and session.kind != expect_kind:
        raise SessionFormatError(f"{path}: expected a {expect_kind} session, got {session.kind}")
    return session


def result_artifact(kind: str, result: Any, input_digests: dict, extra: dict | None = None) -> dict:
    """Envelope for a solver result written by the CLI."""
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "result": result.to_dict(),
           "input_digests": input_digests, "solver_version": __version__}
    if extra:
        doc.update(extra)
    return doc


def read_artifact(path: PathLike, kind: str) -> dict:
    doc = read_json(path)
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise SessionFormatError(f"{path}: expected a {kind!r} artifact")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SessionFormatError(f"{path}: unsupported schema_version {doc.get('schema_version')}")
    return doc


def calibration_artifact(calib, session_digests: dict, captured_at: str | None = None) -> dict:
    """CalibrationSet plus provenance; digests not produced locally may be marked ``"external"``."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "calibration",
        "calibration": calib.to_dict(),
        "provenance": {"session_digests": session_digests,
                       "solver_versions": {"drillnav": __version__},
                       "captured_at": captured_at},
    }


def trajectory_csv_text(header: dict, points: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("# " + canonical_json(header) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x_mm", "y_mm", "z_mm"])
    for p in np.asarray(points, dtype=float):
        w.writerow([repr(float(c)) for c in p])
    return buf.getvalue()


def write_trajectory_csv(path: PathLike, traj: Trajectory | None = None, *, header: dict | None = None,
                         points: np.ndarray | None = None) -> None:
    if traj is not None:
        header, points = traj.header(), traj.sample_points
    atomic_write_text(path, trajectory_csv_text(header or {}, points))


def read_trajectory_csv(path: PathLike) -> tuple[dict, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise SessionFormatError(f"{path}: missing JSON header line")
        header = json.loads(first[2:])
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x_mm", "y_mm", "z_mm"]:
        raise SessionFormatError(f"{path}: missing x_mm,y_mm,z_mm column row")
    pts = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float).reshape(-1, 3)
    return header, pts
