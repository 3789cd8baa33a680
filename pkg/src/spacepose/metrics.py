"""SPEC2021-style pose scoring with hardware precision floors.

Orientation scores are computed and reported in radians; the 0.169 degree
floor is converted accordingly.  Floors are applied per image, before dataset
averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import IdMismatch, NonUnitQuaternion, ZeroGroundTruthPosition
from .geometry import Pose, Quaternion

POSITION_FLOOR = 0.002173
ORIENTATION_FLOOR_RAD = math.radians(0.169)
_QUAT_TOL = 1e-6


@dataclass(frozen=True)
class ImageScore:
    id: str
    s_pos: float
    s_ori: float

    @property
    def s_total(self) -> float:
        return self.s_pos + self.s_ori


@dataclass(frozen=True)
class ScoreReport:
    """Per-image scores plus dataset means over ``count`` images."""

    per_image: tuple[ImageScore, ...]
    mean_pos: float
    mean_ori: float
    mean_total: float
    count: int

    def to_dict(self) -> dict:
        return {
            "per_image": [
                {
                    "id": s.id,
                    "s_pos": s.s_pos,
                    "s_ori": s.s_ori,
                    "s_total": s.s_total,
                }
                for s in self.per_image
            ],
            "mean_pos": self.mean_pos,
            "mean_ori": self.mean_ori,
            "mean_total": self.mean_total,
            "count": self.count,
        }


def s_pos(t_est, t_gt) -> float:
    """Position score: translation error normalised by the ground-truth range.

    Values below the 0.002173 robotic-platform precision floor are zeroed.

    Raises:
        ZeroGroundTruthPosition: the ground-truth translation has zero norm.
    """
    est = np.asarray(t_est, dtype=float)
    gt = np.asarray(t_gt, dtype=float)
    norm_gt = float(np.linalg.norm(gt))
    if norm_gt <= 0.0:
        raise ZeroGroundTruthPosition("ground-truth position has zero norm")
    score = float(np.linalg.norm(est - gt)) / norm_gt
    return 0.0 if score < POSITION_FLOOR else score


def _quat_array(q, name: str) -> np.ndarray:
    if isinstance(q, Quaternion):
        return q.array
    a = np.asarray(q, dtype=float).reshape(-1)
    if a.shape != (4,):
        raise ValueError(f"{name} must be a quaternion of length 4")
    n = float(np.linalg.norm(a))
    if abs(n - 1.0) > _QUAT_TOL:
        raise NonUnitQuaternion(f"{name} norm {n!r} deviates beyond {_QUAT_TOL}")
    return a


def s_ori(q_est, q_gt) -> float:
    """Orientation score in radians: ``2 arccos(|<q_est, q_gt>|)``.

    Symmetric in its arguments and invariant under the quaternion double
    cover.  Values below the 0.169 degree arm-precision floor (in radians)
    are zeroed.

    Raises:
        NonUnitQuaternion: a quaternion norm deviates from 1 beyond 1e-6.
    """
    a = _quat_array(q_est, "q_est")
    b = _quat_array(q_gt, "q_gt")
    dot = min(abs(float(a @ b)), 1.0)
    angle = 2.0 * math.acos(dot)
    return 0.0 if angle < ORIENTATION_FLOOR_RAD else angle


def score_dataset(
    estimates: Mapping[str, Pose], ground_truth: Mapping[str, Pose]
) -> ScoreReport:
    """Score a matched set of estimated poses against ground truth.

    Per-image entries are ordered by image id; dataset means are arithmetic.

    Raises:
        IdMismatch: the two mappings do not cover the same ids.
    """
    est_ids = set(estimates)
    gt_ids = set(ground_truth)
    if est_ids != gt_ids:
        missing = sorted(gt_ids - est_ids)[:5]
        extra = sorted(est_ids - gt_ids)[:5]
        raise IdMismatch(
            f"estimate/ground-truth ids differ (missing={missing}, extra={extra})"
        )
    if not est_ids:
        raise IdMismatch("empty dataset")

    scores = []
    for image_id in sorted(est_ids):
        est = estimates[image_id]
        gt = ground_truth[image_id]
        scores.append(
            ImageScore(
                id=image_id,
                s_pos=s_pos(est.translation, gt.translation),
                s_ori=s_ori(est.quaternion, gt.quaternion),
            )
        )
    return ScoreReport(
        per_image=tuple(scores),
        mean_pos=float(np.mean([s.s_pos for s in scores])),
        mean_ori=float(np.mean([s.s_ori for s in scores])),
        mean_total=float(np.mean([s.s_total for s in scores])),
        count=len(scores),
    )
