"""Rigid-transform arithmetic for tracker/robot frame chains.

Conventions
-----------
* ``Pose`` ``a_T_b`` maps points expressed in frame ``b`` into frame ``a``:
  ``p_a = R @ p_b + t``. Translations are millimetres.
* Quaternions are Hamilton ``[w, x, y, z]`` with ``R(q1 * q2) = R(q1) R(q2)``,
  stored with a non-negative scalar part.
* Roll/pitch/yaw are intrinsic Z-Y-X: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameter

_RENORM_TOL = 1e-12
_GIMBAL_TOL_DEG = 1e-6


def _canonical(q: np.ndarray) -> np.ndarray:
    # q and -q are the same rotation; pick the sign deterministically
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return -q if c < 0.0 else q
    return q


def quat_multiply(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: Sequence[float]) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    s = 2.0 / (w * w + x * x + y * y + z * z)
    xx, yy, zz = x * x * s, y * y * s, z * z * s
    xy, xz, yz = x * y * s, x * z * s, y * z * s
    wx, wy, wz = w * x * s, w * y * s, w * z * s
    return np.array([
        [1.0 - (yy + zz), xy - wz, xz + wy],
        [xy + wz, 1.0 - (xx + zz), yz - wx],
        [xz - wy, yz + wx, 1.0 - (xx + yy)],
    ])


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    # Shepperd: branch on the largest diagonal term to avoid cancellation
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    k = int(np.argmax([tr, m[0, 0], m[1, 1], m[2, 2]]))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


class Rot3:
    """Immutable 3D rotation backed by a canonical unit quaternion."""

    __slots__ = ("_q", "_m")

    def __init__(self, q: Sequence[float]):
        q = np.array(q, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if not np.isfinite(n) or n == 0.0:
            raise InvalidParameter(f"not a rotation quaternion: {q!r}")
        # renormalizing an already-unit quaternion would perturb the last bits
        if abs(n - 1.0) > _RENORM_TOL:
            q = q / n
        q = _canonical(q)
        q.flags.writeable = False
        self._q = q
        self._m = None

    @classmethod
    def identity(cls) -> Rot3:
        return cls([1.0, 0.0, 0.0, 0.0])

    @classmethod
    def from_quat(cls, q: Sequence[float]) -> Rot3:
        return cls(q)

    @classmethod
    def from_matrix(cls, m, *, tol: float = 1e-6) -> Rot3:
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise InvalidParameter(f"rotation matrix must be 3x3, got {m.shape}")
        if np.abs(m.T @ m - np.eye(3)).max() > tol or abs(np.linalg.det(m) - 1.0) > tol:
            raise InvalidParameter("matrix is not a proper rotation")
        return cls(_matrix_to_quat(m))

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> Rot3:
        """``angle`` in radians about ``axis`` (normalized here)."""
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            return cls.identity()
        axis = axis / n
        h = 0.5 * angle
        return cls(np.concatenate([[math.cos(h)], math.sin(h) * axis]))

    @classmethod
    def from_rotvec(cls, v: Sequence[float]) -> Rot3:
        v = np.asarray(v, dtype=float)
        return cls.from_axis_angle(v, float(np.linalg.norm(v)))

    @classmethod
    def from_rpy(cls, roll: float, pitch: float, yaw: float, *, degrees: bool = True) -> Rot3:
        if degrees:
            roll, pitch, yaw = (math.radians(a) for a in (roll, pitch, yaw))
        return (cls.from_axis_angle([0, 0, 1], yaw)
                @ cls.from_axis_angle([0, 1, 0], pitch)
                @ cls.from_axis_angle([1, 0, 0], roll))

    @property
    def quat(self) -> np.ndarray:
        return self._q

    @property
    def matrix(self) -> np.ndarray:
        if self._m is None:
            m = _quat_to_matrix(self._q)
            m.flags.writeable = False
            self._m = m
        return self._m

    def inv(self) -> Rot3:
        return Rot3(quat_conjugate(self._q))

    def __matmul__(self, other: Rot3) -> Rot3:
        return Rot3(quat_multiply(self._q, other._q))

    def apply(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T

    @property
    def angle(self) -> float:
        """Geodesic rotation angle in radians, in [0, pi]."""
        w = min(1.0, abs(float(self._q[0])))
        return 2.0 * math.atan2(float(np.linalg.norm(self._q[1:])), w)

    def as_rotvec(self) -> np.ndarray:
        v = self._q[1:]
        s = float(np.linalg.norm(v))
        if s == 0.0:
            return np.zeros(3)
        return v / s * (2.0 * math.atan2(s, float(self._q[0])))

    def as_rpy(self, *, degrees: bool = True) -> tuple[float, float, float]:
        """Return ``(roll, pitch, yaw)`` for intrinsic Z-Y-X.

        Within 1e-6 deg of pitch = +/-90 deg the roll is folded into yaw and
        reported as 0.
        """
        m = self.matrix
        pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
        if abs(abs(math.degrees(pitch)) - 90.0) < _GIMBAL_TOL_DEG:
            roll = 0.0
            yaw = math.atan2(-m[0, 1], m[1, 1])
        else:
            roll = math.atan2(m[2, 1], m[2, 2])
            yaw = math.atan2(m[1, 0], m[0, 0])
        if degrees:
            return math.degrees(roll), math.degrees(pitch), math.degrees(yaw)
        return roll, pitch, yaw

    def __eq__(self, other) -> bool:
        return isinstance(other, Rot3) and bool(np.array_equal(self._q, other._q))

    def __hash__(self) -> int:
        return hash(self._q.tobytes())

    def __repr__(self) -> str:
        return f"Rot3(q={self._q.tolist()})"


def geodesic_angle(a: Rot3, b: Rot3) -> float:
    """Angle in radians of the rotation taking ``b`` to ``a``."""
    return (b.inv() @ a).angle


def random_rotation(rng: np.random.Generator) -> Rot3:
    """Uniformly distributed rotation (normalized Gaussian quaternion)."""
    q = rng.standard_normal(4)
    return Rot3(q / np.linalg.norm(q))


class Pose:
    """Immutable SE(3) element ``(rotation, translation_mm)``."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Rot3 | None = None, translation: Iterable[float] = (0.0, 0.0, 0.0)):
        t = np.array(translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InvalidParameter(f"non-finite translation {t!r}")
        t.flags.writeable = False
        object.__setattr__(self, "rotation", rotation if rotation is not None else Rot3.identity())
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("Pose is immutable")

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_translation(cls, t: Iterable[float]) -> Pose:
        return cls(Rot3.identity(), t)

    @classmethod
    def from_matrix(cls, m) -> Pose:
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise InvalidParameter(f"pose matrix must be 4x4, got {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise InvalidParameter("pose matrix bottom row must be [0, 0, 0, 1]")
        return cls(Rot3.from_matrix(m[:3, :3]), m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def inv(self) -> Pose:
        return invert(self)

    def apply(self, points) -> np.ndarray:
        """Map a point (3,) or an (N, 3) array into the parent frame."""
        return self.rotation.apply(points) + self.translation

    def to_dict(self) -> dict:
        return {"q": [float(c) for c in self.rotation.quat],
                "t_mm": [float(c) for c in self.translation]}

    @classmethod
    def from_dict(cls, d) -> Pose:
        if isinstance(d, dict) and "q" in d:
            return cls(Rot3(d["q"]), d["t_mm"])
        if isinstance(d, dict) and "matrix" in d:
            return cls.from_matrix(d["matrix"])
        if isinstance(d, (list, tuple)):
            m = np.asarray(d, dtype=float)
            return cls.from_matrix(m.reshape(4, 4) if m.size == 16 else m)
        raise InvalidParameter(f"unrecognized pose encoding: {d!r}")

    def __eq__(self, other) -> bool:
        return (isinstance(other, Pose) and self.rotation == other.rotation
                and bool(np.array_equal(self.translation, other.translation)))

    def __hash__(self) -> int:
        return hash((self.rotation, self.translation.tobytes()))

    def __repr__(self) -> str:
        return f"Pose(q={self.rotation.quat.tolist()}, t_mm={self.translation.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation.apply(b.translation) + a.translation)


def invert(p: Pose) -> Pose:
    r_inv = p.rotation.inv()
    return Pose(r_inv, -r_inv.apply(p.translation))


@dataclass(frozen=True)
class PoseError:
    """Position error in mm and orientation error magnitudes in degrees."""

    position_error: float
    roll: float
    pitch: float
    yaw: float

    def to_dict(self) -> dict:
        return {"position_mm": self.position_error, "roll_deg": self.roll,
                "pitch_deg": self.pitch, "yaw_deg": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> PoseError:
        return cls(d["position_mm"], d["roll_deg"], d["pitch_deg"], d["yaw_deg"])


def pose_error(measured: Pose, desired: Pose) -> PoseError:
    """Euclidean position error plus conjugate-quaternion orientation error.

    The orientation error ``q_err = conj(q_desired) * q_measured`` is expressed
    in the desired frame and decomposed into roll/pitch/yaw magnitudes.
    """
    dp = float(np.linalg.norm(measured.translation - desired.translation))
    q_err = quat_multiply(quat_conjugate(desired.rotation.quat), measured.rotation.quat)
    roll, pitch, yaw = Rot3(q_err).as_rpy(degrees=True)
    return PoseError(dp, abs(roll), abs(pitch), abs(yaw))
