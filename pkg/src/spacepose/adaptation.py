"""Robust pseudo-labelling with per-head consensus and a self-training loop.

A prediction source (the network stand-in) exposes ``predict`` and ``retrain``
behind the :class:`Predictor` interface.  Each iteration every image is
re-evaluated: keypoints are decoded with a hard argmax, filtered by border
margin and response, and fed to RANSAC-EPnP per head.  An image receives a
pseudo-label only when every head converges; the label set is regenerated
from scratch each iteration so it always reflects the current model's
consensus (which lets the labelled fraction drop when the reprojection
threshold tightens).

Per-image randomness is derived as ``hash(seed, image_id, iteration)``, so
label generation within an iteration is order-independent and the whole loop
is deterministic for fixed seeds.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import BudgetExhausted
from .geometry import (
    CameraIntrinsics,
    KeypointModel,
    Pose,
    camera_depths,
    project,
)
from .heatmap import HeadOutput, Heatmap, HeatmapConfig, hard_argmax, render_gaussian, response_score
from .pnp import PnPResult, RansacConfig, ransac_epnp


@dataclass(frozen=True)
class FilterConfig:
    """Keypoint filtering: border margin (pixels) and how many to keep."""

    edge_margin: float = 5.0
    keep_count: int = 7

    def __post_init__(self):
        if self.edge_margin < 0:
            raise ValueError("edge_margin must be >= 0")
        if self.keep_count < 4:
            raise ValueError("keep_count must be >= 4 (PnP minimum)")


@dataclass(frozen=True)
class LoopConfig:
    """Self-training loop schedule.

    ``reproj_schedule`` holds (iteration, threshold) overrides with strictly
    increasing 1-based iterations; from each listed iteration onward the
    RANSAC reprojection threshold takes the given value.
    """

    iterations: int = 50
    ransac: RansacConfig = field(default_factory=RansacConfig)
    reproj_schedule: tuple[tuple[int, float], ...] = ()
    retrain_epochs: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        schedule = tuple((int(i), float(r)) for i, r in self.reproj_schedule)
        if any(i < 1 for i, _ in schedule):
            raise ValueError("schedule iterations must be >= 1")
        if any(b[0] <= a[0] for a, b in zip(schedule, schedule[1:])):
            raise ValueError("schedule iterations must be strictly increasing")
        if any(r <= 0 for _, r in schedule):
            raise ValueError("schedule thresholds must be positive")
        object.__setattr__(self, "reproj_schedule", schedule)

    def threshold_at(self, iteration: int) -> float:
        r = self.ransac.reproj_threshold
        for it, value in self.reproj_schedule:
            if iteration >= it:
                r = value
        return r


@dataclass(frozen=True)
class PseudoLabel:
    """An accepted label with its provenance and acceptance metadata."""

    pose: Pose
    iteration: int
    head: int
    responses: tuple[float, ...]
    inliers: int
    head_converged: tuple[bool, ...]


@dataclass
class PseudoLabelStore:
    """Per-image accepted labels; at most one per image."""

    labels: dict[str, PseudoLabel] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    def ids(self) -> list[str]:
        return sorted(self.labels)

    def poses(self) -> dict[str, Pose]:
        return {i: lab.pose for i, lab in self.labels.items()}


@dataclass(frozen=True)
class AcceptanceRecord:
    """One acceptance-curve row."""

    iteration: int
    labelled: int
    total: int
    fraction: float
    reproj_threshold: float


class Predictor(ABC):
    """Prediction source feeding the loop; stands in for the network.

    ``predict`` must be deterministic between ``retrain`` calls for a fixed
    seed, and the head count must stay constant over the predictor's life.
    """

    @property
    @abstractmethod
    def num_heads(self) -> int: ...

    @abstractmethod
    def predict(self, sample_id: str) -> list[HeadOutput]: ...

    @abstractmethod
    def retrain(self, labels: Mapping[str, Pose], epochs: int) -> None: ...


def _derive_seed(*parts) -> int:
    text = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2s(text, digest_size=8).digest(), "little")


class OraclePredictor(Predictor):
    """Simulation stand-in: renders heatmaps at noise-perturbed projections
    of hidden ground-truth poses.

    ``retrain`` anneals the pixel-noise sigma linearly in the labelled
    fraction, monotonically and never below ``sigma_floor``; this is
    simulation plumbing standing in for network retraining, not a training
    model.  Predictions are deterministic between retrains for a fixed seed.
    """

    def __init__(
        self,
        poses: Mapping[str, Pose],
        model: KeypointModel,
        cam: CameraIntrinsics,
        heatmap_cfg: HeatmapConfig | None = None,
        sigma_px: float = 3.0,
        sigma_floor: float = 0.3,
        outlier_prob: float = 0.0,
        depth_noise: float = 0.0,
        num_heads: int = 2,
        rng_seed: int = 0,
        map_scale: int = 1,
    ):
        if num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        if not 0 <= outlier_prob <= 1:
            raise ValueError("outlier_prob must lie in [0, 1]")
        if sigma_floor < 0 or sigma_px < 0:
            raise ValueError("noise sigmas must be >= 0")
        if cam.width % map_scale or cam.height % map_scale:
            raise ValueError("map_scale must divide the image size")
        self._poses = dict(poses)
        self._model = model
        self._cam = cam
        self._cfg = heatmap_cfg or HeatmapConfig()
        self._sigma0 = float(sigma_px)
        self._sigma = float(sigma_px)
        self._floor = float(sigma_floor)
        self._outlier_prob = float(outlier_prob)
        self._depth_noise = float(depth_noise)
        self._heads = int(num_heads)
        self._seed = int(rng_seed)
        self._scale = int(map_scale)
        self._version = 0

    @property
    def num_heads(self) -> int:
        return self._heads

    @property
    def current_sigma(self) -> float:
        return self._sigma

    def predict(self, sample_id: str) -> list[HeadOutput]:
        pose = self._poses[sample_id]
        px = project(self._model.points, pose, self._cam)
        depths = camera_depths(self._model.points, pose)
        k = px.shape[0]
        size = (self._cam.height // self._scale, self._cam.width // self._scale)
        heads = []
        for h in range(self._heads):
            rng = np.random.default_rng(
                _derive_seed(self._seed, sample_id, h, self._version)
            )
            centers = px + rng.normal(0.0, self._sigma, size=(k, 2))
            hit = rng.uniform(size=k) < self._outlier_prob
            uniform = np.stack(
                [
                    rng.uniform(0, self._cam.width - 1, size=k),
                    rng.uniform(0, self._cam.height - 1, size=k),
                ],
                axis=1,
            )
            centers[hit] = uniform[hit]
            depth_scale = 1.0 + rng.normal(0.0, self._depth_noise, size=k) if (
                self._depth_noise > 0
            ) else np.ones(k)
            maps = tuple(
                render_gaussian(c / self._scale, self._cfg, size) for c in centers
            )
            dmaps = np.ones((k, *size)) * np.maximum(
                depths * depth_scale, 1e-3
            ).reshape(k, 1, 1)
            heads.append(HeadOutput(maps, dmaps))
        return heads

    def retrain(self, labels: Mapping[str, Pose], epochs: int) -> None:
        fraction = len(labels) / max(len(self._poses), 1)
        target = self._sigma0 + (self._floor - self._sigma0) * fraction
        self._sigma = max(self._floor, min(self._sigma, target))
        self._version += 1


def filter_keypoints(
    points: np.ndarray,
    maps: Sequence[Heatmap],
    cfg: FilterConfig,
    image_size: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Drop near-border keypoints, rank survivors by total heatmap response,
    keep the strongest ``keep_count``.

    ``image_size`` is (width, height); a point survives the border check when
    ``margin <= u <= width-1-margin`` and likewise for ``v``.  Response ties
    break toward the lower keypoint index.  Returned indices reference the
    original ordering; fewer than ``keep_count`` survivors are returned as-is
    (callers decide whether enough remain).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    width, height = image_size
    margin = cfg.edge_margin
    inside = (
        (pts[:, 0] >= margin)
        & (pts[:, 0] <= width - 1 - margin)
        & (pts[:, 1] >= margin)
        & (pts[:, 1] <= height - 1 - margin)
    )
    candidates = np.nonzero(inside)[0]
    responses = np.array([response_score(maps[i]) for i in candidates])
    # Stable sort on (-response, index): lower index wins ties.
    order = np.lexsort((candidates, -responses))
    kept = np.sort(candidates[order[: cfg.keep_count]])
    return kept, pts[kept]


def generate_pseudo_label(
    heads: Sequence[HeadOutput],
    model: KeypointModel,
    cam: CameraIntrinsics,
    fcfg: FilterConfig,
    rcfg: RansacConfig,
    iteration: int = 0,
) -> PseudoLabel | None:
    """Consensus label from one image's head outputs, or None.

    Per head: hard-argmax decode, border/response filtering, RANSAC-EPnP.
    A label is produced only when every head converges; the returned pose
    comes from the head whose kept keypoints have the largest summed
    response.  Response ties break toward the lower head index.
    """
    results: list[PnPResult] = []
    responses: list[float] = []
    for h, head in enumerate(heads):
        hh, ww = head.resolution
        su = cam.width / ww
        sv = cam.height / hh
        decoded = np.array(
            [hard_argmax(m) for m in head.keypoint_maps], dtype=float
        ) * np.array([su, sv])
        kept, pts = filter_keypoints(
            decoded, head.keypoint_maps, fcfg, (cam.width, cam.height)
        )
        total_response = float(
            sum(response_score(head.keypoint_maps[i]) for i in kept)
        )
        responses.append(total_response)
        if kept.size < 4:
            results.append(
                PnPResult(Pose.identity(), np.zeros(0, dtype=bool), np.inf, False)
            )
            continue
        seeded = replace(rcfg, rng_seed=_derive_seed(rcfg.rng_seed, h))
        results.append(ransac_epnp(model.points[kept], pts, cam, seeded))

    flags = tuple(r.converged for r in results)
    if not all(flags):
        return None
    best = max(range(len(heads)), key=lambda h: (responses[h], -h))
    return PseudoLabel(
        pose=results[best].pose,
        iteration=iteration,
        head=best,
        responses=tuple(responses),
        inliers=results[best].num_inliers,
        head_converged=flags,
    )


def _iterate(
    dataset: Sequence[str],
    predictor: Predictor,
    model: KeypointModel,
    cam: CameraIntrinsics,
    cfg: LoopConfig,
    filter_cfg: FilterConfig,
) -> Iterator[tuple[AcceptanceRecord, PseudoLabelStore]]:
    total = len(dataset)
    for iteration in range(1, cfg.iterations + 1):
        threshold = cfg.threshold_at(iteration)
        labels: dict[str, PseudoLabel] = {}
        for sample_id in dataset:
            heads = predictor.predict(sample_id)
            rcfg = replace(
                cfg.ransac,
                reproj_threshold=threshold,
                rng_seed=_derive_seed(cfg.ransac.rng_seed, sample_id, iteration),
            )
            label = generate_pseudo_label(
                heads, model, cam, filter_cfg, rcfg, iteration=iteration
            )
            if label is not None:
                labels[sample_id] = label
        store = PseudoLabelStore(labels)
        record = AcceptanceRecord(
            iteration=iteration,
            labelled=len(store),
            total=total,
            fraction=len(store) / total,
            reproj_threshold=threshold,
        )
        yield record, store
        predictor.retrain(store.poses(), cfg.retrain_epochs)


def run_adaptation_loop(
    dataset: Sequence[str],
    predictor: Predictor,
    model: KeypointModel,
    cam: CameraIntrinsics,
    cfg: LoopConfig,
    filter_cfg: FilterConfig | None = None,
) -> tuple[PseudoLabelStore, list[AcceptanceRecord]]:
    """Run the full self-training schedule over a dataset of sample ids.

    Returns the final iteration's label store (the current consensus) and the
    per-iteration acceptance curve.  Deterministic for fixed seeds.

    Raises:
        ValueError: empty dataset.
    """
    if not dataset:
        raise ValueError("dataset must contain at least one sample")
    filter_cfg = filter_cfg or FilterConfig()
    store = PseudoLabelStore()
    curve: list[AcceptanceRecord] = []
    for record, store in _iterate(dataset, predictor, model, cam, cfg, filter_cfg):
        curve.append(record)
    return store, curve


def build_pseudo_test_set(
    dataset: Sequence[str],
    predictor: Predictor,
    model: KeypointModel,
    cam: CameraIntrinsics,
    cfg: LoopConfig,
    target_fraction: float = 0.30,
    filter_cfg: FilterConfig | None = None,
) -> tuple[PseudoLabelStore, list[AcceptanceRecord]]:
    """Run the loop until the labelled fraction reaches ``target_fraction``.

    Returns the labelled subset (and the curve up to the stopping iteration).

    Raises:
        BudgetExhausted: the iteration budget ran out below the target; the
            exception carries the achieved fraction.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise ValueError("target_fraction must lie in (0, 1]")
    if not dataset:
        raise ValueError("dataset must contain at least one sample")
    filter_cfg = filter_cfg or FilterConfig()
    curve: list[AcceptanceRecord] = []
    for record, store in _iterate(dataset, predictor, model, cam, cfg, filter_cfg):
        curve.append(record)
        if record.fraction >= target_fraction:
            return store, curve
    raise BudgetExhausted(curve[-1].fraction if curve else 0.0, target_fraction)
