"""Synthetic robot, tracker, digitizer and phantom.

A ``Scene`` holds the ground truth for every frame in the setup. Capture
generators read the truth through a ``NoiseModel`` (noise is added to the
readings only), and ``execute_procedure`` pushes commanded flange poses back
through the truth to measure what the calibration actually achieved.

Every random stream is derived from ``(scene.rng_seed, stream name)`` so a
fixed seed reproduces all outputs bit-for-bit.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .errors import InvalidParameter
from .handeye import HandEyeSample, solve_handeye
from .navigate import (CalibrationSet, Event, MarkedPose, Phase, Tool, WorkflowState, advance_phase,
                       desired_eef_pose, mark_pose)
from .pointcal import PivotSample, TipSample, solve_pivot, solve_tip
from .se3 import Pose, PoseError, Rot3, pose_error
from .trajectory import (CurvatureFit, PedicleModel, Trajectory, breach_margin, classify_breach, fit_curvature,
                         plan_trajectory)

CAPTURE_MODES = ("diverse", "locked", "single_axis")


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise. Translations in mm (1-sigma), rotations in degrees."""

    tracker_translation_sigma: float = 0.0
    tracker_rotation_sigma: float = 0.0
    robot_translation_sigma: float = 0.0
    robot_rotation_sigma: float = 0.0
    tip_contact_sigma: float = 0.0  # flexible (rounded) tip only
    wall_roughness_sigma: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParameter(f"noise sigma {k} must be finite and >= 0, got {v}")

    def scaled(self, factor: float) -> NoiseModel:
        return NoiseModel(**{k: v * factor for k, v in asdict(self).items()})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> NoiseModel:
        return cls(**{k: float(v) for k, v in d.items() if k in cls.__dataclass_fields__})


def load_preset(name: str) -> NoiseModel:
    """Noise preset shipped with the package (``zero`` or ``table1``)."""
    try:
        text = resources.files("drillnav").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InvalidParameter(f"unknown noise preset {name!r}") from None
    return NoiseModel.from_dict(json.loads(text)["noise"])


@dataclass(frozen=True, eq=False)
class Workspace:
    """Box (base frame) the flange visits during calibration captures."""

    center: tuple = (600.0, 0.0, 450.0)
    half_extent: tuple = (150.0, 150.0, 100.0)
    max_tilt_deg: float = 35.0


@dataclass(frozen=True, eq=False)
class Scene:
    ground_truth_X: Pose  # polaris_T_S
    ground_truth_Z: Pose  # drill_T_eef
    digitizer_tip_offset_true: np.ndarray
    rigid_tip_offset_true: np.ndarray  # flange frame
    flexible_tip_offset_true: np.ndarray  # flange frame
    vertebra_pose_in_S: Pose
    pedicle: PedicleModel  # canal axis in vertebra frame; doubles as the intended drilling pose
    pivot_point_in_S: np.ndarray
    rng_seed: int
    workspace: Workspace = field(default_factory=Workspace)

    def tip_offset_true(self, tool: Tool) -> np.ndarray:
        return self.rigid_tip_offset_true if Tool(tool) is Tool.RIGID else self.flexible_tip_offset_true

    def eef_T_tip_true(self, tool: Tool) -> Pose:
        return Pose(self.ground_truth_Z.rotation.inv(), self.tip_offset_true(tool))

    @property
    def target_in_S(self) -> Pose:
        return self.vertebra_pose_in_S @ self.pedicle.canal_axis_pose

    def rng(self, stream: str) -> np.random.Generator:
        return np.random.default_rng([self.rng_seed & (2 ** 64 - 1), zlib.crc32(stream.encode())])

    def to_dict(self) -> dict:
        v = lambda a: [float(c) for c in a]  # noqa: E731
        return {
            "rng_seed": self.rng_seed,
            "X_polaris_T_S": self.ground_truth_X.to_dict(),
            "Z_drill_T_eef": self.ground_truth_Z.to_dict(),
            "digitizer_tip_offset_mm": v(self.digitizer_tip_offset_true),
            "rigid_tip_offset_mm": v(self.rigid_tip_offset_true),
            "flexible_tip_offset_mm": v(self.flexible_tip_offset_true),
            "vertebra_pose_in_S": self.vertebra_pose_in_S.to_dict(),
            "pedicle": self.pedicle.to_dict(),
            "pivot_point_in_S_mm": v(self.pivot_point_in_S),
            "workspace": {"center_mm": v(self.workspace.center), "half_extent_mm": v(self.workspace.half_extent),
                          "max_tilt_deg": self.workspace.max_tilt_deg},
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scene:
        arr = lambda k: np.array(d[k], dtype=float)  # noqa: E731
        ws = d.get("workspace")
        workspace = Workspace(tuple(ws["center_mm"]), tuple(ws["half_extent_mm"]),
                              ws["max_tilt_deg"]) if ws else Workspace()
        return cls(Pose.from_dict(d["X_polaris_T_S"]), Pose.from_dict(d["Z_drill_T_eef"]),
                   arr("digitizer_tip_offset_mm"), arr("rigid_tip_offset_mm"), arr("flexible_tip_offset_mm"),
                   Pose.from_dict(d["vertebra_pose_in_S"]), PedicleModel.from_dict(d["pedicle"]),
                   arr("pivot_point_in_S_mm"), int(d["rng_seed"]), workspace)


def _small_rotation(rng: np.random.Generator, max_deg: float) -> Rot3:
    axis = rng.standard_normal(3)
    return Rot3.from_axis_angle(axis, math.radians(max_deg) * rng.uniform(-1.0, 1.0))


def _gaussian_rotation(rng: np.random.Generator, sigma_deg: float) -> Rot3:
    # uniform axis, Gaussian angle; always draw so stream positions do not depend on sigma
    axis = rng.standard_normal(3)
    angle = rng.standard_normal()
    return Rot3.from_axis_angle(axis, math.radians(sigma_deg) * angle)


def _perturb(pose: Pose, rng: np.random.Generator, sigma_t: float, sigma_r_deg: float) -> Pose:
    """Noisy reading of ``pose``; rotation noise is applied in the parent frame."""
    dr = _gaussian_rotation(rng, sigma_r_deg)
    dt = rng.standard_normal(3) * sigma_t
    if sigma_t == 0.0 and sigma_r_deg == 0.0:
        return pose
    return Pose(dr @ pose.rotation, pose.translation + dt)


def make_scene(seed: int) -> Scene:
    """Plausible randomized bench layout for ``seed``."""
    rng = np.random.default_rng([seed & (2 ** 64 - 1), zlib.crc32(b"scene")])
    # tracker about 1.8 m from the robot base, facing back toward it
    S_T_polaris = Pose(Rot3.from_rpy(0.0, 0.0, 180.0) @ _small_rotation(rng, 15.0),
                       [1800.0, 0.0, 900.0] + rng.uniform(-100.0, 100.0, 3))
    # marker on the drill body, offset from the flange
    eef_T_drill = Pose(_small_rotation(rng, 25.0), [60.0, 0.0, 120.0] + rng.uniform(-10.0, 10.0, 3))
    vertebra = Pose(_small_rotation(rng, 10.0), [600.0, 0.0, 150.0] + rng.uniform(-20.0, 20.0, 3))
    # canal -z (drilling direction) points roughly down into the phantom
    canal = Pose(_small_rotation(rng, 15.0),
                 [15.0, 0.0, 20.0] + rng.uniform(-3.0, 3.0, 3))
    return Scene(
        ground_truth_X=S_T_polaris.inv(),
        ground_truth_Z=eef_T_drill.inv(),
        digitizer_tip_offset_true=np.array([0.0, 0.0, -150.0]) + rng.normal(0.0, 0.5, 3),
        rigid_tip_offset_true=np.array([0.0, 0.0, 210.0]) + rng.uniform(-3.0, 3.0, 3),
        flexible_tip_offset_true=np.array([0.0, 0.0, 225.0]) + rng.uniform(-3.0, 3.0, 3),
        vertebra_pose_in_S=vertebra,
        pedicle=PedicleModel(canal_axis_pose=canal),
        pivot_point_in_S=np.array([550.0, 150.0, 120.0]) + rng.uniform(-20.0, 20.0, 3),
        rng_seed=int(seed),
    )


def _flange_rotations(rng: np.random.Generator, n: int, scene: Scene, mode: str) -> list[Rot3]:
    down = Rot3.from_rpy(180.0, 0.0, 0.0)
    tilt = scene.workspace.max_tilt_deg
    if mode == "diverse":
        return [down @ _small_rotation(rng, tilt) for _ in range(n)]
    base = down @ _small_rotation(rng, tilt)
    if mode == "locked":
        return [base] * n
    if mode == "single_axis":
        axis = rng.standard_normal(3)
        return [Rot3.from_axis_angle(axis, math.radians(rng.uniform(-tilt, tilt))) @ base for _ in range(n)]
    raise InvalidParameter(f"unknown capture mode {mode!r}; expected one of {CAPTURE_MODES}")


def _flange_poses(rng: np.random.Generator, n: int, scene: Scene, mode: str) -> list[Pose]:
    rots = _flange_rotations(rng, n, scene, mode)
    c, h = np.asarray(scene.workspace.center), np.asarray(scene.workspace.half_extent)
    return [Pose(r, c + rng.uniform(-1.0, 1.0, 3) * h) for r in rots]


def generate_handeye_captures(scene: Scene, n: int, noise: NoiseModel, *, mode: str = "diverse",
                              rng: Optional[np.random.Generator] = None) -> list[HandEyeSample]:
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    rng = scene.rng("handeye") if rng is None else rng
    X, Z = scene.ground_truth_X, scene.ground_truth_Z
    out = []
    for i, S_T_eef in enumerate(_flange_poses(rng, n, scene, mode)):
        polaris_T_drill = X @ S_T_eef @ Z.inv()
        tracker = _perturb(polaris_T_drill, rng, noise.tracker_translation_sigma, noise.tracker_rotation_sigma)
        robot = _perturb(S_T_eef, rng, noise.robot_translation_sigma, noise.robot_rotation_sigma)
        out.append(HandEyeSample(tracker.inv(), robot.inv(), i))
    return out


def _digitizer_rotation(rng: np.random.Generator, cone_deg: float = 35.0) -> Rot3:
    # shaft (body +z, tip at -z) tilted up to cone_deg from vertical, random spin about the shaft
    spin = Rot3.from_axis_angle([0, 0, 1], rng.uniform(-math.pi, math.pi))
    return _small_rotation(rng, cone_deg) @ spin


def generate_pivot_captures(scene: Scene, n: int, noise: NoiseModel, *, mode: str = "diverse",
                            rng: Optional[np.random.Generator] = None) -> list[PivotSample]:
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    rng = scene.rng("pivot") if rng is None else rng
    pivot_in_polaris = scene.ground_truth_X.apply(scene.pivot_point_in_S)
    if mode == "diverse":
        rots = [_digitizer_rotation(rng) for _ in range(n)]
    elif mode == "locked":
        rots = [_digitizer_rotation(rng)] * n
    elif mode == "single_axis":
        base, axis = _digitizer_rotation(rng), rng.standard_normal(3)
        rots = [Rot3.from_axis_angle(axis, rng.uniform(-0.6, 0.6)) @ base for _ in range(n)]
    else:
        raise InvalidParameter(f"unknown capture mode {mode!r}")
    out = []
    for i, r_in_S in enumerate(rots):
        rot = scene.ground_truth_X.rotation @ r_in_S
        truth = Pose(rot, pivot_in_polaris - rot.apply(scene.digitizer_tip_offset_true))
        reading = _perturb(truth, rng, noise.tracker_translation_sigma, noise.tracker_rotation_sigma)
        out.append(PivotSample.from_pose(reading, i))
    return out


def generate_tip_captures(scene: Scene, n: int, noise: NoiseModel, tool: Tool, *, mode: str = "diverse",
                          rng: Optional[np.random.Generator] = None) -> list[TipSample]:
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    tool = Tool(tool)
    rng = scene.rng(f"tip-{tool.value}") if rng is None else rng
    offset = scene.tip_offset_true(tool)
    contact_sigma = noise.tip_contact_sigma if tool is Tool.FLEXIBLE else 0.0
    out = []
    for i, S_T_eef in enumerate(_flange_poses(rng, n, scene, mode)):
        contact = S_T_eef.apply(offset) + rng.standard_normal(3) * contact_sigma
        r_dig = _digitizer_rotation(rng)
        S_T_dig = Pose(r_dig, contact - r_dig.apply(scene.digitizer_tip_offset_true))
        polaris_T_dig = scene.ground_truth_X @ S_T_dig
        tracker = _perturb(polaris_T_dig, rng, noise.tracker_translation_sigma, noise.tracker_rotation_sigma)
        robot = _perturb(S_T_eef, rng, noise.robot_translation_sigma, noise.robot_rotation_sigma)
        out.append(TipSample(robot, tracker, i))
    return out


def generate_marking(scene: Scene, noise: NoiseModel, *, rng: Optional[np.random.Generator] = None) -> Pose:
    """Tracker reading of the digitizer held on the intended entry, shaft along the drilling axis."""
    rng = scene.rng("marking") if rng is None else rng
    S_T_dig = scene.target_in_S @ Pose.from_translation(-scene.digitizer_tip_offset_true)
    truth = scene.ground_truth_X @ S_T_dig
    return _perturb(truth, rng, noise.tracker_translation_sigma, noise.tracker_rotation_sigma)


@dataclass(frozen=True, eq=False)
class ProcedureReport:
    seed: int
    rigid_tip_error: PoseError
    flexible_tip_error: PoseError
    commanded_rigid: Pose
    commanded_flexible: Pose
    achieved_rigid_tip: Pose  # tracker frame
    achieved_flexible_tip: Pose
    breach_margin: float
    breach_class: str
    curvature: CurvatureFit
    planned_radius: float
    drilled_cloud: np.ndarray  # vertebra frame
    final_phase: Phase
    audit: tuple

    @property
    def radius_error_pct(self) -> float:
        return 100.0 * abs(self.curvature.radius - self.planned_radius) / self.planned_radius

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "tip_error": {"rigid": self.rigid_tip_error.to_dict(), "flexible": self.flexible_tip_error.to_dict()},
            "commanded_eef": {"rigid": self.commanded_rigid.to_dict(), "flexible": self.commanded_flexible.to_dict()},
            "achieved_tip_in_polaris": {"rigid": self.achieved_rigid_tip.to_dict(),
                                        "flexible": self.achieved_flexible_tip.to_dict()},
            "breach_margin_mm": self.breach_margin,
            "breach_class": self.breach_class,
            "curvature": self.curvature.to_dict(),
            "planned_radius_mm": self.planned_radius,
            "radius_error_pct": self.radius_error_pct,
            "n_cloud_points": int(len(self.drilled_cloud)),
            "final_phase": self.final_phase.value,
            "audit": [e.to_dict() for e in self.audit],
        }


def _roughen(traj: Trajectory, sigma: float, rng: np.random.Generator) -> np.ndarray:
    pts = np.array(traj.sample_points, dtype=float)
    tangents = traj.tangent_at(traj.sample_arclengths())
    noise = rng.standard_normal((len(pts), 2)) * sigma
    # cross-section basis perpendicular to the local tangent
    helper = np.where(np.abs(tangents[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(tangents, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(tangents, e1)
    return pts + noise[:, :1] * e1 + noise[:, 1:] * e2


def execute_procedure(scene: Scene, calib: CalibrationSet, marked: MarkedPose, plan: Trajectory,
                      noise: Optional[NoiseModel] = None, *,
                      state: Optional[WorkflowState] = None) -> ProcedureReport:
    """Drill the pilot hole and the J-shape against the ground truth and report what was achieved.

    ``plan`` supplies the J-shape parameters; the drilled path is that shape
    started from the pose the drill tip actually reached.
    """
    noise = noise or NoiseModel()
    clock = iter(range(1000))
    state = state or WorkflowState()
    state = advance_phase(state, Event.CALIBRATION_LOADED, timestamp=next(clock), calibration=calib)
    state = advance_phase(state, Event.POSE_MARKED, timestamp=next(clock), marked=marked)

    X_true = scene.ground_truth_X
    vert_T_polaris = scene.vertebra_pose_in_S.inv() @ X_true.inv()
    desired = marked.polaris_T_drill_tip_desired

    def run_tool(tool: Tool) -> tuple[Pose, Pose]:
        cmd = desired_eef_pose(marked, calib, tool)
        achieved = X_true @ cmd @ scene.eef_T_tip_true(tool)
        return cmd, achieved

    cmd_r, tip_r = run_tool(Tool.RIGID)
    state = advance_phase(state, Event.PILOT_DONE, timestamp=next(clock), commanded_pose=cmd_r)
    state = advance_phase(state, Event.TOOL_SWAPPED, timestamp=next(clock))
    cmd_f, tip_f = run_tool(Tool.FLEXIBLE)
    state = advance_phase(state, Event.JSHAPE_DONE, timestamp=next(clock), commanded_pose=cmd_f)
    state = advance_phase(state, Event.HOME_REACHED, timestamp=next(clock))

    pilot = plan.with_entry(vert_T_polaris @ tip_r)
    jshape = plan.with_entry(vert_T_polaris @ tip_f)
    margin = breach_margin(pilot, scene.pedicle)
    cloud = _roughen(jshape, noise.wall_roughness_sigma, scene.rng("roughness"))
    s = jshape.sample_arclengths()
    fit = fit_curvature(cloud[s >= jshape.pilot_depth - 1e-12])

    return ProcedureReport(
        seed=scene.rng_seed,
        rigid_tip_error=pose_error(tip_r, desired),
        flexible_tip_error=pose_error(tip_f, desired),
        commanded_rigid=cmd_r, commanded_flexible=cmd_f,
        achieved_rigid_tip=tip_r, achieved_flexible_tip=tip_f,
        breach_margin=margin, breach_class=classify_breach(margin),
        curvature=fit, planned_radius=plan.arc_radius,
        drilled_cloud=cloud, final_phase=state.phase, audit=state.audit,
    )


@dataclass(frozen=True)
class CaptureCounts:
    handeye: int = 15
    pivot: int = 20
    tip: int = 15


@dataclass(frozen=True, eq=False)
class EndToEndRun:
    scene: Scene
    handeye_samples: list
    pivot_samples: list
    tip_samples: dict
    calibration: CalibrationSet
    marked: MarkedPose
    plan: Trajectory
    report: ProcedureReport


def default_plan(scene: Scene, pilot_depth: float = 25.0, radius: float = 69.5, arc_angle: float = 60.0,
                 plane_roll: float = 0.0, step: float = 0.5) -> Trajectory:
    return plan_trajectory(scene.pedicle.canal_axis_pose, pilot_depth, radius, arc_angle, plane_roll, step)


def run_end_to_end(seed: int, noise: NoiseModel, counts: CaptureCounts = CaptureCounts(),
                   plan_kwargs: Optional[dict] = None) -> EndToEndRun:
    """Simulate captures, calibrate, mark, and execute one procedure."""
    scene = make_scene(seed)
    he = generate_handeye_captures(scene, counts.handeye, noise)
    pv = generate_pivot_captures(scene, counts.pivot, noise)
    tips = {t: generate_tip_captures(scene, counts.tip, noise, t) for t in (Tool.RIGID, Tool.FLEXIBLE)}
    he_res = solve_handeye(he)
    pv_res = solve_pivot(pv)
    calib = CalibrationSet(
        handeye=he_res, digitizer_tip_offset=pv_res.x_tip, pivot=pv_res,
        rigid_tip=solve_tip(tips[Tool.RIGID], he_res.X, pv_res.x_tip),
        flexible_tip=solve_tip(tips[Tool.FLEXIBLE], he_res.X, pv_res.x_tip),
    )
    marked = mark_pose(generate_marking(scene, noise), calib.digitizer_tip_offset)
    plan = default_plan(scene, **(plan_kwargs or {}))
    report = execute_procedure(scene, calib, marked, plan, noise)
    return EndToEndRun(scene, he, pv, tips, calib, marked, plan, report)
