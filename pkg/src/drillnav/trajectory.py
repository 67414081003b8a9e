"""J-shape drilling geometry, curvature measurement and pedicle breach margin.

A J-shape path starts at the entry pose, runs straight along the entry
frame's -z (insertion axis) for the pilot depth, then follows a circular arc
of the guide-tube radius. With ``plane_roll = 0`` the arc bends toward the
entry frame's +x; a non-zero roll turns the bending plane about the
insertion axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CollinearPoints, InvalidParameter
from .se3 import Pose

GUIDE_RADIUS_MM = 69.5
TUNNEL_DIAMETER_MM = 3.91
CANAL_WIDTH_MM = 12.62
PERFORATION_TOLERANCE_MM = 4.0
MAX_ARC_ANGLE_DEG = 120.0
DEFAULT_STEP_MM = 0.5

_INSERTION_AXIS = np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True, eq=False)
class Trajectory:
    entry_pose: Pose
    pilot_depth: float
    arc_radius: float
    arc_angle: float  # degrees
    arc_plane_roll: float  # degrees
    step: float
    sample_points: np.ndarray
    frame: str = "vertebra"

    @property
    def insertion_dir(self) -> np.ndarray:
        return self.entry_pose.rotation.apply(_INSERTION_AXIS)

    @property
    def bend_dir(self) -> np.ndarray:
        r = math.radians(self.arc_plane_roll)
        return self.entry_pose.rotation.apply([math.cos(r), math.sin(r), 0.0])

    @property
    def arc_length(self) -> float:
        return self.arc_radius * math.radians(self.arc_angle)

    @property
    def length(self) -> float:
        return self.pilot_depth + self.arc_length

    @property
    def transition_point(self) -> np.ndarray:
        return self.entry_pose.translation + self.pilot_depth * self.insertion_dir

    @property
    def arc_center(self) -> np.ndarray:
        return self.transition_point + self.arc_radius * self.bend_dir

    def point_at(self, s) -> np.ndarray:
        """Points at arclength(s) ``s`` from the entry, shape (3,) or (N, 3)."""
        s = np.asarray(s, dtype=float)
        d, b = self.insertion_dir, self.bend_dir
        straight = np.minimum(s, self.pilot_depth)
        phi = np.maximum(s - self.pilot_depth, 0.0) / self.arc_radius
        p = (self.entry_pose.translation
             + np.multiply.outer(straight, d)
             + self.arc_radius * (np.multiply.outer(np.sin(phi), d) + np.multiply.outer(1.0 - np.cos(phi), b)))
        return p

    def tangent_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        phi = np.maximum(s - self.pilot_depth, 0.0) / self.arc_radius
        return np.multiply.outer(np.cos(phi), self.insertion_dir) + np.multiply.outer(np.sin(phi), self.bend_dir)

    def sample_arclengths(self) -> np.ndarray:
        n = max(1, math.ceil(self.length / self.step - 1e-9))
        return self.length * np.arange(n + 1) / n

    def pilot_points(self) -> np.ndarray:
        s = self.sample_arclengths()
        return self.sample_points[s <= self.pilot_depth + 1e-12]

    def arc_points(self) -> np.ndarray:
        s = self.sample_arclengths()
        return self.sample_points[s >= self.pilot_depth - 1e-12]

    def with_entry(self, entry: Pose) -> Trajectory:
        return plan_trajectory(entry, self.pilot_depth, self.arc_radius, self.arc_angle,
                               self.arc_plane_roll, self.step, frame=self.frame)

    def header(self) -> dict:
        return {"frame": self.frame, "entry_pose": self.entry_pose.to_dict(),
                "pilot_depth_mm": self.pilot_depth, "arc_radius_mm": self.arc_radius,
                "arc_angle_deg": self.arc_angle, "arc_plane_roll_deg": self.arc_plane_roll,
                "step_mm": self.step, "n_points": int(len(self.sample_points))}


def plan_trajectory(entry: Pose, pilot_depth: float, radius: float = GUIDE_RADIUS_MM, arc_angle: float = 90.0,
                    plane_roll: float = 0.0, step: float = DEFAULT_STEP_MM, *, frame: str = "vertebra") -> Trajectory:
    """Pilot segment followed by a tangent-continuous constant-curvature arc."""
    if not (pilot_depth >= 0 and math.isfinite(pilot_depth)):
        raise InvalidParameter(f"pilot_depth must be >= 0, got {pilot_depth}")
    if not (radius > 0 and math.isfinite(radius)):
        raise InvalidParameter(f"radius must be > 0, got {radius}")
    if not (0 <= arc_angle <= MAX_ARC_ANGLE_DEG):
        raise InvalidParameter(f"arc_angle must lie in [0, {MAX_ARC_ANGLE_DEG}] deg, got {arc_angle}")
    if not (step > 0 and math.isfinite(step)):
        raise InvalidParameter(f"step must be > 0, got {step}")
    if not math.isfinite(plane_roll):
        raise InvalidParameter("plane_roll must be finite")
    if pilot_depth == 0 and arc_angle == 0:
        raise InvalidParameter("trajectory has zero length")
    traj = Trajectory(entry, float(pilot_depth), float(radius), float(arc_angle), float(plane_roll),
                      float(step), np.empty((0, 3)), frame)
    pts = traj.point_at(traj.sample_arclengths())
    pts.flags.writeable = False
    object.__setattr__(traj, "sample_points", pts)
    return traj


@dataclass(frozen=True, eq=False)
class CurvatureFit:
    radius: float
    center: np.ndarray
    plane_normal: np.ndarray
    rms_residual: float

    def to_dict(self) -> dict:
        return {"radius_mm": self.radius, "center_mm": [float(c) for c in self.center],
                "plane_normal": [float(c) for c in self.plane_normal], "rms_residual_mm": self.rms_residual}


def fit_curvature(points) -> CurvatureFit:
    """Best-fit circle in 3D.

    Plane from the centroid and the smallest principal direction, then a
    Kasa algebraic fit in that plane refined by one Gauss-Newton step on the
    geometric distances.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 3:
        raise InvalidParameter("fit_curvature needs an (N >= 3, 3) point array")
    centroid = p.mean(axis=0)
    q = p - centroid
    evals, evecs = np.linalg.eigh(q.T @ q)
    if evals[2] <= 0.0 or evals[1] <= 1e-12 * evals[2]:
        raise CollinearPoints("points are collinear; radius of curvature is unbounded")
    normal = evecs[:, 0]
    normal = normal / np.linalg.norm(normal)
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    u, w = evecs[:, 2], evecs[:, 1]
    x, y = q @ u, q @ w

    a = np.column_stack([x, y, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(a, -(x * x + y * y), rcond=None)
    cx, cy = -0.5 * sol[0], -0.5 * sol[1]
    r = math.sqrt(max(cx * cx + cy * cy - sol[2], 0.0))

    dx, dy = x - cx, y - cy
    dist = np.hypot(dx, dy)
    jac = np.column_stack([-dx / dist, -dy / dist, -np.ones_like(dist)])
    delta, *_ = np.linalg.lstsq(jac, -(dist - r), rcond=None)
    cx, cy, r = cx + delta[0], cy + delta[1], r + delta[2]

    radial = np.hypot(x - cx, y - cy) - r
    height = q @ normal
    rms = math.sqrt(float(np.mean(radial ** 2 + height ** 2)))
    return CurvatureFit(float(abs(r)), centroid + cx * u + cy * w, normal, rms)


@dataclass(frozen=True)
class PedicleModel:
    canal_width: float = CANAL_WIDTH_MM
    tunnel_diameter: float = TUNNEL_DIAMETER_MM
    canal_axis_pose: Pose = Pose()

    def __post_init__(self):
        if not (0 < self.tunnel_diameter < self.canal_width):
            raise InvalidParameter("tunnel diameter must be positive and smaller than the canal width")

    def to_dict(self) -> dict:
        return {"canal_width_mm": self.canal_width, "tunnel_diameter_mm": self.tunnel_diameter,
                "canal_axis_pose": self.canal_axis_pose.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> PedicleModel:
        return cls(d["canal_width_mm"], d["tunnel_diameter_mm"], Pose.from_dict(d["canal_axis_pose"]))


def breach_margin(traj: Trajectory, pedicle: PedicleModel) -> float:
    """Smallest wall clearance along the pilot segment, mm; negative is breach depth.

    The canal is a cylinder around the -z axis of ``pedicle.canal_axis_pose``.
    """
    origin = pedicle.canal_axis_pose.translation
    axis = pedicle.canal_axis_pose.rotation.apply(_INSERTION_AXIS)
    rel = traj.pilot_points() - origin
    lateral = rel - np.outer(rel @ axis, axis)
    dist = np.linalg.norm(lateral, axis=1)
    return float(np.min((pedicle.canal_width - pedicle.tunnel_diameter) / 2.0 - dist))


def classify_breach(margin: float, tolerance: float = PERFORATION_TOLERANCE_MM) -> str:
    if margin >= 0:
        return "contained"
    if -margin < tolerance:
        return "breach: within clinical tolerance"
    return "breach: exceeds clinical tolerance"
