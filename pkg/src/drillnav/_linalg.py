"""Small dense linear-algebra helpers shared by the calibration solvers."""

import numpy as np
from scipy.linalg import solve_triangular


def lstsq_qr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least squares via Householder QR (no normal equations). ``a`` must have full column rank."""
    q, r = np.linalg.qr(a, mode="reduced")
    return solve_triangular(r, q.T @ b)


def normalized_min_singular(a: np.ndarray) -> float:
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (orthogonal Procrustes)."""
    u, _, vt = np.linalg.svd(m)
    if np.linalg.det(u @ vt) < 0.0:
        u[:, -1] = -u[:, -1]
    return u @ vt


def stacked_pivot_matrix(rotations) -> np.ndarray:
    """Rows ``[R_i, -I]`` for a list of 3x3 rotation matrices."""
    eye = np.eye(3)
    return np.vstack([np.hstack([r, -eye]) for r in rotations])
