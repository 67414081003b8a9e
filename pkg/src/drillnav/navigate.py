"""Pose marking, commanded flange poses, and the drilling workflow.

Frame chain used for commanding the robot::

    polaris_T_tip_desired = polaris_T_digitizer @ digitizer_T_digitizer_tip
    S_T_eef_desired       = inv(X) @ polaris_T_tip_desired @ tip_T_eef

where ``X = polaris_T_S`` from hand-eye calibration and ``tip_T_eef`` carries
the hand-eye ``Z`` rotation together with the calibrated tip translation of
the active tool.
"""

from __future__ import annotations

import enum
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import IllegalTransition, InvalidParameter, MissingCalibration
from .handeye import HandEyeResult
from .pointcal import PivotResult, TipResult
from .se3 import Pose, Rot3


class Tool(str, enum.Enum):
    NONE = "none"
    RIGID = "rigid"
    FLEXIBLE = "flexible"


class Phase(str, enum.Enum):
    UNCALIBRATED = "uncalibrated"
    CALIBRATED = "calibrated"
    POSE_MARKED = "pose_marked"
    PILOT_DRILLED = "pilot_drilled"
    MAINTENANCE_SWAP = "maintenance_swap"
    JSHAPE_DRILLED = "jshape_drilled"
    HOMED = "homed"


class Event(str, enum.Enum):
    CALIBRATION_LOADED = "calibration_loaded"
    POSE_MARKED = "pose_marked"
    PILOT_DONE = "pilot_done"
    TOOL_SWAPPED = "tool_swapped"
    JSHAPE_DONE = "jshape_done"
    HOME_REACHED = "home_reached"


@dataclass(frozen=True)
class MarkedPose:
    polaris_T_drill_tip_desired: Pose
    source_digitizer_pose: Pose
    timestamp: float = 0.0

    def to_dict(self) -> dict:
        return {"polaris_T_drill_tip_desired": self.polaris_T_drill_tip_desired.to_dict(),
                "polaris_T_digitizer": self.source_digitizer_pose.to_dict(),
                "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, d: dict) -> MarkedPose:
        return cls(Pose.from_dict(d["polaris_T_drill_tip_desired"]),
                   Pose.from_dict(d["polaris_T_digitizer"]), float(d["timestamp"]))


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Everything solved during hardware calibration.

    ``digitizer_tip_offset`` is the digitizer tip in its body frame, taken
    either from ``pivot`` or from a datasheet value. ``tip_alignment`` rotates
    the drill marker axes into the drill-tip frame (identity when the marker
    is mounted with its -z along the insertion axis).
    """

    handeye: HandEyeResult
    digitizer_tip_offset: np.ndarray
    pivot: Optional[PivotResult] = None
    rigid_tip: Optional[TipResult] = None
    flexible_tip: Optional[TipResult] = None
    tip_alignment: Rot3 = field(default_factory=Rot3.identity)

    def __post_init__(self):
        diag = [self.handeye.rotation_residual_deg, self.handeye.translation_residual,
                self.handeye.condition_diagnostic, *np.asarray(self.digitizer_tip_offset, dtype=float)]
        for r in (self.pivot, self.rigid_tip, self.flexible_tip):
            if r is not None:
                diag += [r.rms_residual, r.condition_diagnostic]
        if not all(math.isfinite(v) for v in diag):
            raise InvalidParameter("calibration diagnostics must be finite")

    @property
    def digitizer_tip_source(self) -> str:
        return "pivot" if self.pivot is not None else "datasheet"

    def tip(self, tool: Tool) -> TipResult:
        tool = Tool(tool)
        res = {Tool.RIGID: self.rigid_tip, Tool.FLEXIBLE: self.flexible_tip}.get(tool)
        if res is None:
            raise MissingCalibration(f"no tip calibration for tool {tool.value!r}")
        return res

    def to_dict(self) -> dict:
        return {
            "handeye": self.handeye.to_dict(),
            "digitizer_tip_offset_mm": [float(c) for c in self.digitizer_tip_offset],
            "digitizer_tip_source": self.digitizer_tip_source,
            "pivot": None if self.pivot is None else self.pivot.to_dict(),
            "rigid_tip": None if self.rigid_tip is None else self.rigid_tip.to_dict(),
            "flexible_tip": None if self.flexible_tip is None else self.flexible_tip.to_dict(),
            "tip_alignment_q": [float(c) for c in self.tip_alignment.quat],
        }

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationSet:
        def opt(key, typ):
            return None if d.get(key) is None else typ.from_dict(d[key])

        return cls(HandEyeResult.from_dict(d["handeye"]),
                   np.array(d["digitizer_tip_offset_mm"], dtype=float),
                   opt("pivot", PivotResult), opt("rigid_tip", TipResult), opt("flexible_tip", TipResult),
                   Rot3(d.get("tip_alignment_q", [1.0, 0.0, 0.0, 0.0])))


def mark_pose(digitizer_pose_in_polaris: Pose, digitizer_tip_offset, timestamp: float = 0.0) -> MarkedPose:
    """Desired drill-tip pose from a digitizer reading.

    The tip transform is a pure translation, so the marked orientation is the
    digitizer body orientation (shaft aligned with the drilling direction).
    """
    tip = digitizer_pose_in_polaris @ Pose.from_translation(digitizer_tip_offset)
    return MarkedPose(tip, digitizer_pose_in_polaris, timestamp)


def eef_T_tip(calib: CalibrationSet, tool: Tool) -> Pose:
    """Drill-tip frame expressed in the flange frame for ``tool``."""
    rot = calib.handeye.Z.rotation.inv() @ calib.tip_alignment
    return Pose(rot, calib.tip(tool).x_drill_tip)


def desired_eef_pose(marked: MarkedPose, calib: CalibrationSet, tool: Tool) -> Pose:
    S_T_polaris = calib.handeye.X.inv()
    return S_T_polaris @ marked.polaris_T_drill_tip_desired @ eef_T_tip(calib, tool).inv()


# (phase, event) -> (next phase, required tool or None, tool after transition or None)
_TRANSITIONS: dict[tuple[Phase, Event], tuple[Phase, Optional[Tool], Optional[Tool]]] = {
    (Phase.UNCALIBRATED, Event.CALIBRATION_LOADED): (Phase.CALIBRATED, None, None),
    (Phase.CALIBRATED, Event.POSE_MARKED): (Phase.POSE_MARKED, None, Tool.RIGID),
    (Phase.POSE_MARKED, Event.PILOT_DONE): (Phase.PILOT_DRILLED, Tool.RIGID, None),
    (Phase.PILOT_DRILLED, Event.TOOL_SWAPPED): (Phase.MAINTENANCE_SWAP, Tool.RIGID, Tool.FLEXIBLE),
    (Phase.MAINTENANCE_SWAP, Event.JSHAPE_DONE): (Phase.JSHAPE_DRILLED, Tool.FLEXIBLE, None),
    (Phase.JSHAPE_DRILLED, Event.HOME_REACHED): (Phase.HOMED, None, None),
}

LEGAL_SEQUENCE = (Event.CALIBRATION_LOADED, Event.POSE_MARKED, Event.PILOT_DONE,
                  Event.TOOL_SWAPPED, Event.JSHAPE_DONE, Event.HOME_REACHED)


@dataclass(frozen=True)
class AuditEntry:
    phase_from: Phase
    phase_to: Phase
    event: Event
    timestamp: float
    commanded_pose: Optional[Pose] = None

    def to_dict(self) -> dict:
        d = {"phase_from": self.phase_from.value, "phase_to": self.phase_to.value,
             "event": self.event.value, "timestamp": self.timestamp}
        if self.commanded_pose is not None:
            d["commanded_pose"] = self.commanded_pose.to_dict()
        return d


@dataclass(frozen=True)
class WorkflowState:
    phase: Phase = Phase.UNCALIBRATED
    active_tool: Tool = Tool.NONE
    calibration: Optional[CalibrationSet] = None
    marked: Optional[MarkedPose] = None
    audit: tuple[AuditEntry, ...] = ()


def advance_phase(state: WorkflowState, event: Event, *, timestamp: Optional[float] = None,
                  calibration: Optional[CalibrationSet] = None, marked: Optional[MarkedPose] = None,
                  commanded_pose: Optional[Pose] = None) -> WorkflowState:
    """Return the successor state, or raise ``IllegalTransition``.

    ``timestamp`` defaults to wall-clock time; pass a logical clock for
    reproducible logs.
    """
    event = Event(event)
    key = (state.phase, event)
    if key not in _TRANSITIONS:
        raise IllegalTransition(f"event {event.value!r} not allowed in phase {state.phase.value!r}")
    nxt, needs, tool_after = _TRANSITIONS[key]
    if needs is not None and state.active_tool is not needs:
        raise IllegalTransition(
            f"event {event.value!r} requires the {needs.value} tool, active tool is {state.active_tool.value}")
    entry = AuditEntry(state.phase, nxt, event, time.time() if timestamp is None else float(timestamp),
                       commanded_pose)
    return replace(
        state,
        phase=nxt,
        active_tool=tool_after if tool_after is not None else state.active_tool,
        calibration=calibration if calibration is not None else state.calibration,
        marked=marked if marked is not None else state.marked,
        audit=state.audit + (entry,),
    )


def append_audit(path: str | os.PathLike, entry: AuditEntry) -> None:
    """Append one transition to a JSON-lines audit log."""
    line = json.dumps(entry.to_dict(), sort_keys=True, separators=(",", ":"))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())
