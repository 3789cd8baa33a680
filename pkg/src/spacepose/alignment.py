"""Closed-form rigid alignment of two point clouds (Umeyama / Kabsch).

No scale factor is estimated and weighting is uniform: the solver returns the
rotation and translation minimizing the sum of squared distances between the
transformed source points and the target points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, TooFewPoints
from .geometry import _check_rotation

# Ratio of smallest to largest singular value below which the source cloud is
# treated as collinear and the minimizer as non-recoverable.
_COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (3x3, det +1) plus translation (metres)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        _check_rotation(r, 1e-9)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return p @ self.rotation.T + self.translation


def _umeyama_rt(s: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw (R, t) solution on validated (n, 3) arrays."""
    n = s.shape[0]
    if n < 3:
        raise TooFewPoints(f"rigid alignment needs >= 3 points, got {n}")
    mu_s = s.mean(axis=0)
    mu_t = t.mean(axis=0)
    sc = s - mu_s
    tc = t - mu_t
    spread = np.linalg.svd(sc, compute_uv=False)
    if spread[0] <= 0 or (spread[1] / spread[0]) ** 2 < _COLLINEAR_TOL:
        raise DegenerateConfiguration("source points are collinear")
    cov = tc.T @ sc
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(u @ vt))
    if sign == 0:
        sign = 1.0
    r = (u * np.array([1.0, 1.0, sign])) @ vt
    return r, mu_t - r @ mu_s


def umeyama_align(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping ``source`` onto ``target``.

    Centroids are subtracted, the 3x3 cross-covariance is decomposed by SVD,
    and the determinant sign is corrected with diag(1, 1, +-1) so the result
    is always a proper rotation, including for mirrored clouds.  When a sign
    flip is needed it is applied on the axis of the smallest singular value.

    Args:
        source: (n, 3) points, n >= 3.
        target: (n, 3) points, same length.

    Raises:
        TooFewPoints: fewer than 3 correspondences.
        DegenerateConfiguration: source points collinear (or coincident).
    """
    s = np.atleast_2d(np.asarray(source, dtype=float))
    t = np.atleast_2d(np.asarray(target, dtype=float))
    if s.shape != t.shape:
        raise ValueError("source and target must have equal shapes")
    r, tr = _umeyama_rt(s, t)
    return RigidTransform(r, tr)


def alignment_residual(tf: RigidTransform, source, target) -> float:
    """Sum of squared distances (m^2) between mapped source and target."""
    s = np.atleast_2d(np.asarray(source, dtype=float))
    t = np.atleast_2d(np.asarray(target, dtype=float))
    if s.shape != t.shape:
        raise ValueError("source and target must have equal shapes")
    diff = tf.apply(s) - t
    return float((diff * diff).sum())
