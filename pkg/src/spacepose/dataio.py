"""Dataset, label and run-configuration files, plus synthetic generation.

All writers are deterministic (bit-exact for identical inputs and seeds) and
atomic (write-temp-then-rename).  Numbers are serialized with 17 significant
digits so every f64 round-trips exactly.

Label entries mirror SPEED+ conventions: scalar-first quaternion, translation
in metres, camera frame.  Converting a real SPEED+ label file amounts to the
field renames ``filename -> id``, ``q_vbs2tango_true -> quaternion``,
``r_Vo2To_vbs_true -> translation``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .adaptation import (
    AcceptanceRecord,
    FilterConfig,
    LoopConfig,
    Predictor,
    PseudoLabel,
    PseudoLabelStore,
)
from .errors import InvalidRange, ParseError, SchemaViolation
from .geometry import (
    CameraIntrinsics,
    KeypointModel,
    Pose,
    Quaternion,
    camera_depths,
    project,
    quat_to_matrix,
    random_quaternion,
)
from .heatmap import HeadOutput, HeatmapConfig, read_hmap, render_gaussian, write_hmap
from .losses import LossWeights
from .pnp import RansacConfig

# An asymmetric, non-coplanar desk-scale spacecraft shape: the eight corners
# of the main body plus an antenna tip and two panel tips.
DEFAULT_KEYPOINTS = np.array(
    [
        [0.30, 0.25, 0.15],
        [0.30, 0.25, -0.15],
        [0.30, -0.25, 0.15],
        [0.30, -0.25, -0.15],
        [-0.30, 0.25, 0.15],
        [-0.30, 0.25, -0.15],
        [-0.30, -0.25, 0.15],
        [-0.30, -0.25, -0.15],
        [0.00, 0.05, 0.42],
        [0.52, 0.00, 0.05],
        [-0.50, -0.04, 0.02],
    ]
)


def default_keypoint_model() -> KeypointModel:
    return KeypointModel(DEFAULT_KEYPOINTS)


def default_camera() -> CameraIntrinsics:
    return CameraIntrinsics(fx=180.0, fy=180.0, cx=32.0, cy=32.0, width=64, height=64)


# --------------------------------------------------------------------------
# Deterministic JSON with 17-significant-digit floats.


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"cannot serialize non-finite number {v!r}")
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_json(obj, indent: int = 0) -> str:
    """Serialize dict/list scalars to JSON text with ``%.17g`` floats.

    Key order is preserved as given, making output bytes a pure function of
    the input structure.
    """
    pad = " " * indent
    inner = " " * (indent + 2)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {dumps_json(v, indent + 2)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [dumps_json(v, indent + 2) for v in obj]
        if all(not isinstance(v, (Mapping, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(inner + p for p in parts) + "\n" + pad + "]"
    return _fmt(obj)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def _require_keys(doc: dict, allowed: dict[str, bool], path: str) -> None:
    """``allowed`` maps key -> required flag."""
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "expected a JSON object")
    for key in doc:
        if key not in allowed:
            raise SchemaViolation(f"{path}.{key}", "unknown key")
    for key, required in allowed.items():
        if required and key not in doc:
            raise SchemaViolation(f"{path}.{key}", "missing required key")


def _number_list(value, length: int, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise SchemaViolation(path, f"expected a list of {length} numbers")
    try:
        arr = np.array([float(v) for v in value])
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(path, "expected numeric entries") from exc
    if not np.all(np.isfinite(arr)):
        raise SchemaViolation(path, "entries must be finite")
    return arr


# --------------------------------------------------------------------------
# Camera / keypoint model files.


def save_camera(cam: CameraIntrinsics, path) -> None:
    atomic_write_text(
        path,
        dumps_json(
            {
                "fx": cam.fx,
                "fy": cam.fy,
                "cx": cam.cx,
                "cy": cam.cy,
                "width": cam.width,
                "height": cam.height,
            }
        )
        + "\n",
    )


def load_camera(path) -> CameraIntrinsics:
    doc = _load_json(path)
    keys = {"fx": True, "fy": True, "cx": True, "cy": True,
            "width": True, "height": True}
    _require_keys(doc, keys, "camera")
    try:
        return CameraIntrinsics(
            fx=float(doc["fx"]),
            fy=float(doc["fy"]),
            cx=float(doc["cx"]),
            cy=float(doc["cy"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolation("camera", str(exc)) from exc


def save_keypoints(model: KeypointModel, path) -> None:
    atomic_write_text(
        path, dumps_json({"points": model.points.tolist()}) + "\n"
    )


def load_keypoints(path) -> KeypointModel:
    doc = _load_json(path)
    _require_keys(doc, {"points": True}, "keypoints")
    pts = doc["points"]
    if not isinstance(pts, list) or len(pts) != KeypointModel.NUM_POINTS:
        raise SchemaViolation(
            "keypoints.points", f"expected {KeypointModel.NUM_POINTS} points"
        )
    rows = [_number_list(p, 3, f"keypoints.points[{i}]") for i, p in enumerate(pts)]
    try:
        return KeypointModel(np.array(rows))
    except ValueError as exc:
        raise SchemaViolation("keypoints.points", str(exc)) from exc


# --------------------------------------------------------------------------
# Dataset manifest and labels.


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    quaternion: np.ndarray | None = None
    translation: np.ndarray | None = None
    heatmap_file: str | None = None

    @property
    def labelled(self) -> bool:
        return self.quaternion is not None

    def pose(self) -> Pose:
        if not self.labelled:
            raise ValueError(f"entry {self.id} carries no label")
        q = self.quaternion
        return Pose(
            quat_to_matrix(Quaternion(q[0], q[1], q[2], q[3])), self.translation
        )


@dataclass(frozen=True)
class DatasetManifest:
    camera: str
    keypoints: str
    entries: tuple[ManifestEntry, ...]
    base_dir: Path = Path(".")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def load_camera(self) -> CameraIntrinsics:
        return load_camera(self.resolve(self.camera))

    def load_keypoints(self) -> KeypointModel:
        return load_keypoints(self.resolve(self.keypoints))

    def entry(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise SchemaViolation(f"entries[id={entry_id}]", "no such entry")

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]


def _parse_quaternion(value, path: str) -> np.ndarray:
    q = _number_list(value, 4, path)
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > 1e-6:
        raise SchemaViolation(path, f"quaternion norm {norm!r} deviates from 1")
    if abs(norm - 1.0) > 1e-12:
        q = q / norm
    return q


def _parse_entry(doc, index: int, extra_keys: dict[str, bool]) -> dict:
    path = f"entries[{index}]"
    keys = {"id": True, "quaternion": False, "translation": False,
            "heatmap_file": False}
    keys.update(extra_keys)
    _require_keys(doc, keys, path)
    if not isinstance(doc["id"], str) or not doc["id"]:
        raise SchemaViolation(f"{path}.id", "expected a non-empty string")
    has_q = "quaternion" in doc
    has_t = "translation" in doc
    if has_q != has_t:
        missing = "translation" if has_q else "quaternion"
        raise SchemaViolation(
            f"{path}.{missing}", "label needs both quaternion and translation"
        )
    out = {"id": doc["id"], "quaternion": None, "translation": None}
    if has_q:
        out["quaternion"] = _parse_quaternion(doc["quaternion"], f"{path}.quaternion")
        out["translation"] = _number_list(doc["translation"], 3, f"{path}.translation")
    if "heatmap_file" in doc:
        if not isinstance(doc["heatmap_file"], str):
            raise SchemaViolation(f"{path}.heatmap_file", "expected a string")
        out["heatmap_file"] = doc["heatmap_file"]
    return out


def load_manifest(path) -> DatasetManifest:
    """Load a dataset manifest; schema violations carry a field path."""
    doc = _load_json(path)
    _require_keys(doc, {"camera": True, "keypoints": True, "entries": True},
                  "manifest")
    for key in ("camera", "keypoints"):
        if not isinstance(doc[key], str):
            raise SchemaViolation(f"manifest.{key}", "expected a path string")
    if not isinstance(doc["entries"], list):
        raise SchemaViolation("manifest.entries", "expected a list")
    entries = []
    seen = set()
    for i, e in enumerate(doc["entries"]):
        parsed = _parse_entry(e, i, {})
        if parsed["id"] in seen:
            raise SchemaViolation(f"entries[{i}].id", f"duplicate id {parsed['id']!r}")
        seen.add(parsed["id"])
        entries.append(
            ManifestEntry(
                id=parsed["id"],
                quaternion=parsed["quaternion"],
                translation=parsed["translation"],
                heatmap_file=parsed.get("heatmap_file"),
            )
        )
    return DatasetManifest(
        camera=doc["camera"],
        keypoints=doc["keypoints"],
        entries=tuple(entries),
        base_dir=Path(path).resolve().parent,
    )


def _entry_doc(e: ManifestEntry) -> dict:
    doc: dict = {"id": e.id}
    if e.labelled:
        doc["quaternion"] = e.quaternion.tolist()
        doc["translation"] = e.translation.tolist()
    if e.heatmap_file is not None:
        doc["heatmap_file"] = e.heatmap_file
    return doc


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "camera": manifest.camera,
        "keypoints": manifest.keypoints,
        "entries": [_entry_doc(e) for e in manifest.entries],
    }
    atomic_write_text(path, dumps_json(doc) + "\n")


@dataclass(frozen=True)
class LabelRecord:
    """One labels-file row: a pose plus optional provenance metadata."""

    id: str
    pose: Pose
    iteration: int | None = None
    head: int | None = None
    inliers: int | None = None


def save_labels(store: PseudoLabelStore, path) -> None:
    """Write a label store as a JSON array ordered by image id."""
    rows = []
    for image_id in store.ids():
        lab = store.labels[image_id]
        q = lab.pose.quaternion
        rows.append(
            {
                "id": image_id,
                "quaternion": [q.w, q.x, q.y, q.z],
                "translation": lab.pose.translation.tolist(),
                "iteration": lab.iteration,
                "head": lab.head,
                "inliers": lab.inliers,
            }
        )
    atomic_write_text(path, dumps_json(rows) + "\n")


def load_labels(path) -> dict[str, LabelRecord]:
    """Load a labels array (or the labelled entries of a manifest file)."""
    doc = _load_json(path)
    if isinstance(doc, dict) and "entries" in doc:
        manifest = load_manifest(path)
        out = {}
        for e in manifest.entries:
            if e.labelled:
                out[e.id] = LabelRecord(id=e.id, pose=e.pose())
        return out
    if not isinstance(doc, list):
        raise SchemaViolation("labels", "expected a JSON array")
    out = {}
    for i, row in enumerate(doc):
        extra = {"iteration": False, "head": False, "inliers": False}
        parsed = _parse_entry(row, i, extra)
        if parsed["quaternion"] is None:
            raise SchemaViolation(f"entries[{i}]", "label rows need a pose")
        if parsed["id"] in out:
            raise SchemaViolation(f"entries[{i}].id", "duplicate id")
        q = parsed["quaternion"]
        pose = Pose(
            quat_to_matrix(Quaternion(q[0], q[1], q[2], q[3])),
            parsed["translation"],
        )
        meta = {k: row.get(k) for k in ("iteration", "head", "inliers")}
        for k, v in meta.items():
            if v is not None and not isinstance(v, int):
                raise SchemaViolation(f"entries[{i}].{k}", "expected an integer")
        out[parsed["id"]] = LabelRecord(id=parsed["id"], pose=pose, **meta)
    return out


def save_acceptance_csv(curve: list[AcceptanceRecord], path) -> None:
    lines = ["iteration,labelled,total,fraction,reproj_threshold"]
    for r in curve:
        lines.append(
            f"{r.iteration},{r.labelled},{r.total},"
            f"{format(r.fraction, '.17g')},{format(r.reproj_threshold, '.17g')}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_acceptance_csv(path) -> list[AcceptanceRecord]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != "iteration,labelled,total,fraction,reproj_threshold":
        raise ParseError(f"{path}: bad acceptance CSV header")
    out = []
    for ln in lines[1:]:
        it, lab, tot, frac, thr = ln.split(",")
        out.append(
            AcceptanceRecord(int(it), int(lab), int(tot), float(frac), float(thr))
        )
    return out


# --------------------------------------------------------------------------
# Run configuration.


@dataclass(frozen=True)
class SynthRanges:
    """Uniform pose sampling box for synthetic data, metres."""

    translation_min: np.ndarray = field(
        default_factory=lambda: np.array([-0.3, -0.3, 7.0])
    )
    translation_max: np.ndarray = field(
        default_factory=lambda: np.array([0.3, 0.3, 10.0])
    )

    def __post_init__(self):
        lo = np.array(self.translation_min, dtype=float)
        hi = np.array(self.translation_max, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("translation bounds must be 3-vectors")
        if np.any(lo > hi):
            raise InvalidRange("translation_min exceeds translation_max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "translation_min", lo)
        object.__setattr__(self, "translation_max", hi)


@dataclass(frozen=True)
class OracleParams:
    """OraclePredictor noise settings (simulation plumbing)."""

    sigma_px: float = 3.0
    sigma_floor: float = 0.5
    outlier_prob: float = 0.0
    depth_noise: float = 0.0
    heads: int = 2


@dataclass(frozen=True)
class RunConfig:
    """One JSON document holding every tunable of the pipeline."""

    seed: int = 0
    heatmap: HeatmapConfig = field(default_factory=HeatmapConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    camera: CameraIntrinsics = field(default_factory=default_camera)
    keypoints: KeypointModel = field(default_factory=default_keypoint_model)
    synth: SynthRanges = field(default_factory=SynthRanges)
    oracle: OracleParams = field(default_factory=OracleParams)
    heatmap_scale: int = 1


_SECTION_KEYS = {
    "seed": False,
    "heatmap": False,
    "filter": False,
    "ransac": False,
    "loop": False,
    "loss_weights": False,
    "camera": False,
    "keypoints": False,
    "synth": False,
    "oracle": False,
    "heatmap_scale": False,
}


def _build_section(doc, path, allowed: dict[str, bool], builder):
    _require_keys(doc, allowed, path)
    try:
        return builder(doc)
    except (TypeError, ValueError, InvalidRange) as exc:
        raise SchemaViolation(path, str(exc)) from exc


def run_config_from_dict(doc: dict, ransac_seed_default: int | None = None) -> RunConfig:
    """Strict parse: unknown keys and invariant violations raise
    SchemaViolation with a field path."""
    _require_keys(doc, _SECTION_KEYS, "config")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise SchemaViolation("config.seed", "expected an integer")

    heatmap = _build_section(
        doc.get("heatmap", {}),
        "config.heatmap",
        {"sigma": False, "beta": False, "temperature": False},
        lambda d: HeatmapConfig(**{k: float(v) for k, v in d.items()}),
    )
    fcfg = _build_section(
        doc.get("filter", {}),
        "config.filter",
        {"edge_margin": False, "keep_count": False},
        lambda d: FilterConfig(
            edge_margin=float(d.get("edge_margin", 5.0)),
            keep_count=int(d.get("keep_count", 7)),
        ),
    )
    rcfg = _build_section(
        doc.get("ransac", {}),
        "config.ransac",
        {"confidence": False, "reproj_threshold": False, "max_iterations": False,
         "min_inliers": False, "rng_seed": False},
        lambda d: RansacConfig(
            confidence=float(d.get("confidence", 0.999)),
            reproj_threshold=float(d.get("reproj_threshold", 2.0)),
            max_iterations=int(d.get("max_iterations", 100)),
            min_inliers=int(d.get("min_inliers", 5)),
            rng_seed=int(d.get("rng_seed", seed)),
        ),
    )
    loop = _build_section(
        doc.get("loop", {}),
        "config.loop",
        {"iterations": False, "reproj_schedule": False, "retrain_epochs": False},
        lambda d: LoopConfig(
            iterations=int(d.get("iterations", 50)),
            ransac=rcfg,
            reproj_schedule=tuple(
                (int(i), float(r)) for i, r in d.get("reproj_schedule", [])
            ),
            retrain_epochs=int(d.get("retrain_epochs", 1)),
        ),
    )
    weights = _build_section(
        doc.get("loss_weights", {}),
        "config.loss_weights",
        {"gamma1": False, "gamma2": False, "beta": False},
        lambda d: LossWeights(**{k: float(v) for k, v in d.items()}),
    )
    cam = _build_section(
        doc.get("camera", {}),
        "config.camera",
        {"fx": False, "fy": False, "cx": False, "cy": False, "width": False,
         "height": False},
        lambda d: CameraIntrinsics(
            fx=float(d.get("fx", 180.0)),
            fy=float(d.get("fy", 180.0)),
            cx=float(d.get("cx", 32.0)),
            cy=float(d.get("cy", 32.0)),
            width=int(d.get("width", 64)),
            height=int(d.get("height", 64)),
        ),
    )
    if "keypoints" in doc:
        kdoc = doc["keypoints"]
        _require_keys(kdoc, {"points": True}, "config.keypoints")
        rows = [
            _number_list(p, 3, f"config.keypoints.points[{i}]")
            for i, p in enumerate(kdoc["points"])
        ]
        try:
            model = KeypointModel(np.array(rows))
        except ValueError as exc:
            raise SchemaViolation("config.keypoints.points", str(exc)) from exc
    else:
        model = default_keypoint_model()
    synth = _build_section(
        doc.get("synth", {}),
        "config.synth",
        {"translation_min": False, "translation_max": False},
        lambda d: SynthRanges(
            translation_min=np.array(d.get("translation_min", [-0.3, -0.3, 7.0]), dtype=float),
            translation_max=np.array(d.get("translation_max", [0.3, 0.3, 10.0]), dtype=float),
        ),
    )
    oracle = _build_section(
        doc.get("oracle", {}),
        "config.oracle",
        {"sigma_px": False, "sigma_floor": False, "outlier_prob": False,
         "depth_noise": False, "heads": False},
        lambda d: OracleParams(
            sigma_px=float(d.get("sigma_px", 3.0)),
            sigma_floor=float(d.get("sigma_floor", 0.5)),
            outlier_prob=float(d.get("outlier_prob", 0.0)),
            depth_noise=float(d.get("depth_noise", 0.0)),
            heads=int(d.get("heads", 2)),
        ),
    )
    scale = doc.get("heatmap_scale", 1)
    if not isinstance(scale, int) or scale < 1:
        raise SchemaViolation("config.heatmap_scale", "expected a positive integer")
    if cam.width % scale or cam.height % scale:
        raise SchemaViolation(
            "config.heatmap_scale", "must divide the image width and height"
        )
    return RunConfig(
        seed=seed,
        heatmap=heatmap,
        filter=fcfg,
        ransac=rcfg,
        loop=loop,
        loss_weights=weights,
        camera=cam,
        keypoints=model,
        synth=synth,
        oracle=oracle,
        heatmap_scale=scale,
    )


def load_run_config(path) -> RunConfig:
    return run_config_from_dict(_load_json(path))


# --------------------------------------------------------------------------
# Synthetic dataset generation and the file-backed predictor.


def synth_dataset(count: int, cfg: RunConfig, out_dir) -> DatasetManifest:
    """Generate a labelled synthetic dataset with rendered heatmap files.

    Poses are sampled uniformly: translation in the configured box,
    orientation by the subgroup algorithm for uniform quaternions.  Every
    keypoint is guaranteed positive depth by requiring the translation box to
    clear the model radius.  Output is deterministic per seed.

    Raises:
        InvalidRange: the box admits non-positive keypoint depths.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    model = cfg.keypoints
    cam = cfg.camera
    radius = float(np.linalg.norm(model.points, axis=1).max())
    if cfg.synth.translation_min[2] - radius <= 0:
        raise InvalidRange(
            f"translation z min {cfg.synth.translation_min[2]} does not clear "
            f"the model radius {radius:.3f}"
        )

    out = Path(out_dir)
    (out / "hmaps").mkdir(parents=True, exist_ok=True)
    save_camera(cam, out / "camera.json")
    save_keypoints(model, out / "keypoints.json")

    scale = cfg.heatmap_scale
    size = (cam.height // scale, cam.width // scale)
    rng = np.random.default_rng(cfg.seed)
    entries = []
    for i in range(count):
        image_id = f"img{i:06d}"
        q = random_quaternion(rng)
        t = rng.uniform(cfg.synth.translation_min, cfg.synth.translation_max)
        pose = Pose(quat_to_matrix(q), t)
        px = project(model.points, pose, cam)
        depths = camera_depths(model.points, pose)
        maps = tuple(
            render_gaussian(c / scale, cfg.heatmap, size) for c in px
        )
        dmaps = np.ones((len(maps), *size)) * depths.reshape(-1, 1, 1)
        head = HeadOutput(maps, dmaps)
        rel = f"hmaps/{image_id}.hmap"
        write_hmap(out / rel, [head] * cfg.oracle.heads)
        entries.append(
            ManifestEntry(
                id=image_id,
                quaternion=np.array([q.w, q.x, q.y, q.z]),
                translation=t,
                heatmap_file=rel,
            )
        )
    manifest = DatasetManifest(
        camera="camera.json",
        keypoints="keypoints.json",
        entries=tuple(entries),
        base_dir=out,
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest


class FilePredictor(Predictor):
    """Serves HMAP1 files listed in a manifest; lets any external network's
    outputs drive the adaptation loop unchanged.  ``retrain`` is a no-op."""

    def __init__(self, manifest: DatasetManifest):
        self._manifest = manifest
        self._cache: dict[str, list[HeadOutput]] = {}
        first = next((e for e in manifest.entries if e.heatmap_file), None)
        if first is None:
            raise SchemaViolation("manifest.entries", "no entry has a heatmap_file")
        self._heads = len(self.predict(first.id))

    @property
    def num_heads(self) -> int:
        return self._heads

    def predict(self, sample_id: str) -> list[HeadOutput]:
        if sample_id not in self._cache:
            entry = self._manifest.entry(sample_id)
            if entry.heatmap_file is None:
                raise SchemaViolation(
                    f"entries[id={sample_id}].heatmap_file", "missing heatmap file"
                )
            self._cache[sample_id] = read_hmap(
                self._manifest.resolve(entry.heatmap_file)
            )
        return self._cache[sample_id]

    def retrain(self, labels: Mapping[str, Pose], epochs: int) -> None:
        return None


def manifest_poses(manifest: DatasetManifest) -> dict[str, Pose]:
    """Ground-truth poses of the labelled manifest entries."""
    return {e.id: e.pose() for e in manifest.entries if e.labelled}
