"""Robot-world / hand-eye calibration ``A_i X = Z B_i``.

``A_i`` is the tracker reading of the drill marker (``drill_T_polaris``),
``B_i`` the robot reading of the flange (``eef_T_S``). The unknowns are
``X = polaris_T_S`` and ``Z = drill_T_eef``.

Rotations come from the Kronecker-product linearization

    (I (x) R_A) vec(R_X) - (R_B^T (x) I) vec(R_Z) = 0

whose null vector is read off the SVD, rescaled to unit determinant and
projected onto SO(3). Translations follow from the stacked linear system
``R_A t_X - t_Z = R_Z t_B - t_A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._linalg import lstsq_qr, project_to_so3
from .errors import InsufficientMotion, TooFewSamples
from .se3 import Pose, Rot3, geodesic_angle

MIN_SAMPLES = 3
MOTION_RANK_TOL = 1e-6
# RMS spread (rad) of the relative motions along their second principal
# axis; tracker jitter alone stays well below this
MIN_MOTION_SPREAD = 1e-2


@dataclass(frozen=True)
class HandEyeSample:
    drill_T_polaris: Pose
    eef_T_S: Pose
    index: int = 0

    def to_dict(self) -> dict:
        return {"index": self.index, "drill_T_polaris": self.drill_T_polaris.to_dict(),
                "eef_T_S": self.eef_T_S.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> HandEyeSample:
        return cls(Pose.from_dict(d["drill_T_polaris"]), Pose.from_dict(d["eef_T_S"]), int(d["index"]))


@dataclass(frozen=True)
class HandEyeResult:
    X: Pose  # polaris_T_S
    Z: Pose  # drill_T_eef
    rotation_residual_deg: float  # RMS geodesic angle
    translation_residual: float  # mm, RMS
    n_samples: int
    condition_diagnostic: float

    @property
    def rotation_residual(self) -> float:
        """RMS rotation residual in radians."""
        return math.radians(self.rotation_residual_deg)

    def to_dict(self) -> dict:
        return {
            "X_polaris_T_S": self.X.to_dict(),
            "Z_drill_T_eef": self.Z.to_dict(),
            "rotation_residual_deg": self.rotation_residual_deg,
            "translation_residual_mm": self.translation_residual,
            "n_samples": self.n_samples,
            "condition_diagnostic": self.condition_diagnostic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> HandEyeResult:
        return cls(Pose.from_dict(d["X_polaris_T_S"]), Pose.from_dict(d["Z_drill_T_eef"]),
                   d["rotation_residual_deg"], d["translation_residual_mm"],
                   int(d["n_samples"]), d["condition_diagnostic"])


def motion_diversity(rotations: Sequence[Rot3]) -> tuple[float, float]:
    """How well the capture rotations pin down the hand-eye problem.

    Stacks the rotation vectors of every rotation relative to the first and
    returns ``(ratio, spread)``: the second singular value normalized by the
    first, and the same singular value as an RMS angle in radians. A ratio
    near zero means every relative motion shares one axis; a small spread
    means the second axis is only excited by measurement noise.
    """
    r0_inv = rotations[0].inv()
    vecs = np.array([(r0_inv @ r).as_rotvec() for r in rotations[1:]])
    if vecs.shape[0] < 2:
        return 0.0, 0.0
    s = np.linalg.svd(vecs, compute_uv=False)
    if s[0] == 0.0:
        return 0.0, 0.0
    return float(s[1] / s[0]), float(s[1] / math.sqrt(len(vecs)))


def _kron_rotations(a_rots: list[np.ndarray], b_rots: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, float]:
    eye = np.eye(3)
    m = np.vstack([np.hstack([np.kron(eye, ra), -np.kron(rb.T, eye)])
                   for ra, rb in zip(a_rots, b_rots)])
    _, s, vt = np.linalg.svd(m)
    v = vt[-1]
    rx = v[:9].reshape(3, 3, order="F")
    rz = v[9:].reshape(3, 3, order="F")
    det = np.linalg.det(rx)
    # the null vector is defined up to scale; fix it so det(R_X) = +1
    alpha = math.copysign(1.0, det) / abs(det) ** (1.0 / 3.0)
    rx = project_to_so3(alpha * rx)
    rz = project_to_so3(alpha * rz)
    cond = float(s[-2] / s[0]) if s[0] > 0 else 0.0
    return rx, rz, cond


def solve_handeye(samples: Sequence[HandEyeSample], *, min_spread: float = MIN_MOTION_SPREAD) -> HandEyeResult:
    if len(samples) < MIN_SAMPLES:
        raise TooFewSamples(f"hand-eye calibration needs >= {MIN_SAMPLES} samples, got {len(samples)}")
    a_poses = [s.drill_T_polaris for s in samples]
    b_poses = [s.eef_T_S for s in samples]
    ratio, spread = motion_diversity([a.rotation for a in a_poses])
    if ratio <= MOTION_RANK_TOL or spread < min_spread:
        raise InsufficientMotion(
            "capture rotations span fewer than two independent axes "
            f"(singular ratio {ratio:.3e}, second-axis spread {math.degrees(spread):.3f} deg)")

    a_rots = [a.rotation.matrix for a in a_poses]
    b_rots = [b.rotation.matrix for b in b_poses]
    rx, rz, cond = _kron_rotations(a_rots, b_rots)

    n = len(samples)
    lhs = np.zeros((3 * n, 6))
    rhs = np.zeros(3 * n)
    for i, (a, b) in enumerate(zip(a_poses, b_poses)):
        lhs[3 * i:3 * i + 3, :3] = a_rots[i]
        lhs[3 * i:3 * i + 3, 3:] = -np.eye(3)
        rhs[3 * i:3 * i + 3] = rz @ b.translation - a.translation
    sol = lstsq_qr(lhs, rhs)

    X = Pose(Rot3.from_matrix(rx), sol[:3])
    Z = Pose(Rot3.from_matrix(rz), sol[3:])

    rot_sq = 0.0
    trans_sq = 0.0
    for a, b in zip(a_poses, b_poses):
        ax = a @ X
        zb = Z @ b
        rot_sq += geodesic_angle(ax.rotation, zb.rotation) ** 2
        trans_sq += float(np.sum((ax.translation - zb.translation) ** 2))
    return HandEyeResult(X, Z, math.degrees(math.sqrt(rot_sq / n)), math.sqrt(trans_sq / n), n, cond)
