"""Point-offset calibrations: digitizer pivot and digitizer-aided drill tip.

Pivot: with the digitizer body at ``(R_i, p_i)`` in the tracker frame and its
tip resting on a fixed point, ``R_i x_tip + p_i = x_pivot`` for every sample.

Drill tip: the calibrated digitizer touches the drill tip while the robot
holds the flange at ``(R_i, p_i)`` in the base frame. The digitizer tip
position ``t_i`` (base frame) then satisfies ``R_i x_drill_tip = t_i - p_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._linalg import lstsq_qr, normalized_min_singular, stacked_pivot_matrix
from .errors import DegenerateGeometry, TooFewSamples
from .se3 import Pose, Rot3

MIN_SAMPLES = 3
# normalized smallest singular value of [R_i, -I]; single-axis or locked
# captures with ~0.1 deg tracker jitter score below 1e-3, a 30 deg cone above 5e-2
RANK_TOL = 5e-3


def _vec(v) -> list[float]:
    return [float(c) for c in v]


@dataclass(frozen=True, eq=False)
class PivotSample:
    """Digitizer body pose in the tracker frame."""

    rotation: Rot3
    position: np.ndarray
    index: int = 0

    @classmethod
    def from_pose(cls, pose: Pose, index: int = 0) -> PivotSample:
        return cls(pose.rotation, pose.translation, index)

    def to_dict(self) -> dict:
        return {"index": self.index, "polaris_T_digitizer": Pose(self.rotation, self.position).to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> PivotSample:
        return cls.from_pose(Pose.from_dict(d["polaris_T_digitizer"]), int(d["index"]))


@dataclass(frozen=True, eq=False)
class PivotResult:
    x_tip: np.ndarray  # digitizer frame, mm
    x_pivot: np.ndarray  # tracker frame, mm
    rms_residual: float
    condition_diagnostic: float
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {"x_tip_mm": _vec(self.x_tip), "x_pivot_mm": _vec(self.x_pivot),
                "rms_residual_mm": self.rms_residual,
                "condition_diagnostic": self.condition_diagnostic, "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> PivotResult:
        return cls(np.array(d["x_tip_mm"], dtype=float), np.array(d["x_pivot_mm"], dtype=float),
                   d["rms_residual_mm"], d["condition_diagnostic"], int(d.get("n_samples", 0)))


@dataclass(frozen=True)
class TipSample:
    S_T_eef: Pose  # robot flange reading
    polaris_T_digitizer: Pose  # tracker reading of the digitizer while touching the drill tip
    index: int = 0

    def to_dict(self) -> dict:
        return {"index": self.index, "S_T_eef": self.S_T_eef.to_dict(),
                "polaris_T_digitizer": self.polaris_T_digitizer.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> TipSample:
        return cls(Pose.from_dict(d["S_T_eef"]), Pose.from_dict(d["polaris_T_digitizer"]), int(d["index"]))


@dataclass(frozen=True, eq=False)
class TipResult:
    x_drill_tip: np.ndarray  # flange frame, mm
    rms_residual: float
    condition_diagnostic: float
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {"x_drill_tip_mm": _vec(self.x_drill_tip), "rms_residual_mm": self.rms_residual,
                "condition_diagnostic": self.condition_diagnostic, "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> TipResult:
        return cls(np.array(d["x_drill_tip_mm"], dtype=float), d["rms_residual_mm"],
                   d["condition_diagnostic"], int(d.get("n_samples", 0)))


def orientation_diversity(rotations: Sequence[Rot3]) -> float:
    """Normalized smallest singular value of the stacked ``[R_i, -I]`` blocks.

    Zero (to rounding) when all orientations coincide or share a single
    rotation axis.
    """
    return normalized_min_singular(stacked_pivot_matrix([r.matrix for r in rotations]))


def _check_geometry(rotations: Sequence[Rot3], what: str, tol: float) -> float:
    if len(rotations) < MIN_SAMPLES:
        raise TooFewSamples(f"{what} needs >= {MIN_SAMPLES} samples, got {len(rotations)}")
    cond = orientation_diversity(rotations)
    if cond <= tol:
        raise DegenerateGeometry(
            f"{what}: orientations do not span two independent rotation axes "
            f"(normalized smallest singular value {cond:.3e})")
    return cond


def solve_pivot(samples: Sequence[PivotSample], *, rank_tol: float = RANK_TOL) -> PivotResult:
    cond = _check_geometry([s.rotation for s in samples], "pivot calibration", rank_tol)
    a = stacked_pivot_matrix([s.rotation.matrix for s in samples])
    b = -np.concatenate([np.asarray(s.position, dtype=float) for s in samples])
    sol = lstsq_qr(a, b)
    x_tip, x_pivot = sol[:3], sol[3:]
    res = [np.linalg.norm(s.rotation.apply(x_tip) + s.position - x_pivot) for s in samples]
    rms = math.sqrt(float(np.mean(np.square(res))))
    return PivotResult(x_tip, x_pivot, rms, cond, len(samples))


def digitizer_tip_in_world(sample: TipSample, X: Pose, digitizer_tip_offset) -> np.ndarray:
    """Digitizer tip position in the robot base frame.

    ``X`` is ``polaris_T_S`` from the hand-eye solve; its inverse carries
    tracker readings into the base frame.
    """
    S_T_digitizer = X.inv() @ sample.polaris_T_digitizer
    return S_T_digitizer.apply(np.asarray(digitizer_tip_offset, dtype=float))


def solve_tip(samples: Sequence[TipSample], X: Pose, digitizer_tip_offset, *,
              rank_tol: float = RANK_TOL) -> TipResult:
    cond = _check_geometry([s.S_T_eef.rotation for s in samples], "tip calibration", rank_tol)
    n = len(samples)
    a = np.vstack([s.S_T_eef.rotation.matrix for s in samples])
    b = np.concatenate([digitizer_tip_in_world(s, X, digitizer_tip_offset) - s.S_T_eef.translation
                        for s in samples])
    x = lstsq_qr(a, b)
    r = (a @ x - b).reshape(n, 3)
    rms = math.sqrt(float(np.mean(np.sum(r * r, axis=1))))
    return TipResult(x, rms, cond, n)
