"""Command-line surface: synth, pnp, score, losses, pseudolabel, gradcheck.

Machine-readable output (JSON or CSV) goes to stdout; human-readable messages
go to stderr.  Exit codes: 0 success, 1 check failure, 2 usage/IO/schema
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .adaptation import OraclePredictor, run_adaptation_loop
from .errors import SchemaViolation, SpacePoseError
from .gradcheck import format_table, run_gradcheck
from .heatmap import hard_argmax, read_hmap, render_gaussian
from .geometry import CameraIntrinsics, project
from .losses import combined_loss
from .metrics import score_dataset
from .pnp import epnp, ransac_epnp, reprojection_error


def _pose_doc(entry_id, pose, extra=None) -> dict:
    q = pose.quaternion
    doc = {
        "id": entry_id,
        "quaternion": [q.w, q.x, q.y, q.z],
        "translation": pose.translation.tolist(),
    }
    if extra:
        doc.update(extra)
    return doc


def _load_config(path: str | None, seed: int | None) -> dataio.RunConfig:
    cfg = dataio.load_run_config(path) if path else dataio.run_config_from_dict({})
    if seed is not None:
        rcfg = dataclasses.replace(cfg.ransac, rng_seed=seed)
        loop = dataclasses.replace(cfg.loop, ransac=rcfg)
        cfg = dataclasses.replace(cfg, seed=seed, ransac=rcfg, loop=loop)
    return cfg


def _cmd_synth(args) -> int:
    cfg = _load_config(args.config, args.seed)
    manifest = dataio.synth_dataset(args.count, cfg, args.out)
    print(dataio.dumps_json({
        "out": str(Path(args.out)),
        "count": len(manifest.entries),
        "seed": cfg.seed,
    }))
    return 0


def _cmd_pnp(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    cam = dataio.load_camera(args.camera)
    model = dataio.load_keypoints(args.model)
    entry = manifest.entry(args.entry)
    if entry.heatmap_file is None:
        raise SchemaViolation(
            f"entries[id={args.entry}].heatmap_file", "entry has no heatmap file"
        )
    heads = read_hmap(manifest.resolve(entry.heatmap_file))
    if not 0 <= args.head < len(heads):
        raise SchemaViolation("head", f"file has {len(heads)} heads")
    head = heads[args.head]
    hh, ww = head.resolution
    scale = np.array([cam.width / ww, cam.height / hh])
    pixels = np.array(
        [hard_argmax(m) for m in head.keypoint_maps], dtype=float
    ) * scale

    cfg = _load_config(args.config, args.seed)
    if args.ransac:
        result = ransac_epnp(model.points, pixels, cam, cfg.ransac)
        doc = _pose_doc(args.entry, result.pose, {
            "converged": bool(result.converged),
            "inliers": result.num_inliers,
            "mean_reproj_error": result.mean_reproj_error,
        })
    else:
        pose = epnp(model.points, pixels, cam)
        err = reprojection_error(pose, model.points, pixels, cam)
        doc = _pose_doc(args.entry, pose, {
            "mean_reproj_error": float(err.mean()),
        })
    print(dataio.dumps_json(doc))
    return 0


def _cmd_score(args) -> int:
    pred = dataio.load_labels(args.pred)
    gt = dataio.load_labels(args.gt)
    report = score_dataset(
        {k: v.pose for k, v in pred.items()},
        {k: v.pose for k, v in gt.items()},
    )
    print(dataio.dumps_json(report.to_dict()))
    return 0


def _cmd_losses(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    cam = manifest.load_camera()
    model = manifest.load_keypoints()
    cfg = _load_config(args.config, None)
    entry = manifest.entry(args.entry)
    pose = entry.pose()
    est_heads = read_hmap(args.pred)

    hh, ww = est_heads[0].resolution
    su, sv = cam.width / ww, cam.height / hh
    gt_px_img = project(model.points, pose, cam)
    gt_px = gt_px_img / np.array([su, sv])
    gt_maps = [render_gaussian(c, cfg.heatmap, (hh, ww)) for c in gt_px]

    report, _, _ = combined_loss(
        est_heads, pose, gt_maps, gt_px, model, cam_for_maps(cam, ww, hh),
        cfg.loss_weights, cfg.heatmap,
    )
    print(dataio.dumps_json(report.to_dict()))
    return 0


def cam_for_maps(cam, map_w: int, map_h: int) -> CameraIntrinsics:
    """Intrinsics rescaled to heatmap resolution (identity when equal)."""
    if (map_w, map_h) == (cam.width, cam.height):
        return cam
    su, sv = cam.width / map_w, cam.height / map_h
    return CameraIntrinsics(
        fx=cam.fx / su, fy=cam.fy / sv, cx=cam.cx / su, cy=cam.cy / sv,
        width=map_w, height=map_h,
    )


def _parse_reproj_drop(spec: str) -> tuple[int, float]:
    try:
        value, at = spec.split("@")
        return int(at), float(value)
    except ValueError as exc:
        raise SchemaViolation(
            "--reproj-drop", f"expected R@K (e.g. 1.0@10), got {spec!r}"
        ) from exc


def _cmd_pseudolabel(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    cam = manifest.load_camera()
    model = manifest.load_keypoints()
    cfg = _load_config(args.config, args.seed)

    loop = cfg.loop
    if args.reproj_drop:
        schedule = list(loop.reproj_schedule)
        for spec in args.reproj_drop:
            schedule.append(_parse_reproj_drop(spec))
        schedule.sort()
        loop = dataclasses.replace(loop, reproj_schedule=tuple(schedule))
    if args.iterations is not None:
        loop = dataclasses.replace(loop, iterations=args.iterations)

    if args.predictor == "oracle":
        poses = dataio.manifest_poses(manifest)
        if set(poses) != set(manifest.ids()):
            raise SchemaViolation(
                "manifest.entries", "oracle predictor needs labels on every entry"
            )
        predictor = OraclePredictor(
            poses,
            model,
            cam,
            heatmap_cfg=cfg.heatmap,
            sigma_px=cfg.oracle.sigma_px,
            sigma_floor=cfg.oracle.sigma_floor,
            outlier_prob=cfg.oracle.outlier_prob,
            depth_noise=cfg.oracle.depth_noise,
            num_heads=cfg.oracle.heads,
            rng_seed=cfg.seed,
            map_scale=cfg.heatmap_scale,
        )
    else:
        predictor = dataio.FilePredictor(manifest)

    store, curve = run_adaptation_loop(
        manifest.ids(), predictor, model, cam, loop, cfg.filter
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_labels(store, out / "labels.json")
    dataio.save_acceptance_csv(curve, out / "acceptance.csv")
    print(dataio.dumps_json({
        "labels": str(out / "labels.json"),
        "acceptance": str(out / "acceptance.csv"),
        "labelled": len(store),
        "total": len(manifest.entries),
        "fraction": curve[-1].fraction,
    }))
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed)
    print(format_table(results), file=sys.stderr)
    ok = all(r.passed for r in results)
    print(dataio.dumps_json({
        "passed": ok,
        "families": [
            {
                "name": r.name,
                "max_rel_err": r.max_rel_err,
                "tolerance": r.tolerance,
                "passed": r.passed,
            }
            for r in results
        ],
    }))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacepose",
        description="Spacecraft 6-DoF pose estimation geometric core",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled dataset")
    p.add_argument("--config", help="run-config JSON (defaults apply if omitted)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pnp", help="solve one entry's pose from its heatmaps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--entry", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ransac", action="store_true",
                   help="robust RANSAC-EPnP instead of plain EPnP")
    p.add_argument("--head", type=int, default=0)
    p.add_argument("--config", help="run-config JSON for RANSAC parameters")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_pnp)

    p = sub.add_parser("score", help="score predicted labels against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("losses", help="evaluate the loss report for one entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--entry", required=True)
    p.add_argument("--pred", required=True, help="HMAP1 file with predictions")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_losses)

    p = sub.add_parser("pseudolabel", help="run the self-training label loop")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--predictor", choices=["oracle", "files"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reproj-drop", action="append", metavar="R@K",
                   help="tighten the reprojection threshold to R at iteration K")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_pseudolabel)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=20240817)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpacePoseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
