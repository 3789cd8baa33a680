"""The three training losses, their weighted combination, and gradients.

Every loss returns its value together with analytic gradients with respect to
the predicted heatmap cells (and depth cells where applicable); no autodiff
engine is involved.  Squared-difference reductions are means over all elements
(pixels, keypoints, matrix entries) so the combination weights keep their
meaning across resolutions.

Gradient paths:

* the keypoint decode differentiates through the soft-argmax expectation,
* the pose inside the reprojection loss differentiates through the solver's
  stationarity conditions (implicit function theorem): with ``f(theta, p)``
  the reprojection objective and ``theta*`` its stationary point,
  ``d theta / d p = -(d2f/dtheta2)^-1 (d2f/dtheta dp)``,
* the rigid alignment inside the structure loss differentiates the closed
  form through its own first-order optimality condition on SO(3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import umeyama_align
from .errors import (
    DegenerateConfiguration,
    DegenerateHeatmap,
    IllConditionedHessian,
    NonPositiveDepth,
    PnPFailure,
    TooFewPoints,
)
from .geometry import CameraIntrinsics, KeypointModel, Pose, lift, pose_inverse
from .heatmap import (
    HeadOutput,
    Heatmap,
    HeatmapConfig,
    sample_depth_grad,
    soft_argmax_with_grad,
)
from .pnp import _epnp_rt, gauss_newton_refine, pose_jacobian

HESSIAN_COND_LIMIT = 1e12
HESSIAN_DAMPING = 1e-9
_LOSS_GN_ITERS = 100
_LOSS_GN_TOL = 1e-14


@dataclass(frozen=True)
class LossWeights:
    """Combination weights: ``total = heatmap + gamma1*pnp + gamma2*structure``."""

    gamma1: float = 0.1
    gamma2: float = 0.1
    beta: float = 1e3

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0 and self.beta > 0):
            raise ValueError("loss weights must be positive")


@dataclass(frozen=True)
class LossReport:
    """Loss values plus the per-head breakdown of each component."""

    heatmap_loss: float
    pnp_loss: float
    structure_loss: float
    total: float
    heatmap_per_head: tuple[float, ...]
    pnp_per_head: tuple[float, ...]
    structure_per_head: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "heatmap_loss": self.heatmap_loss,
            "pnp_loss": self.pnp_loss,
            "structure_loss": self.structure_loss,
            "total": self.total,
            "per_head": {
                "heatmap": list(self.heatmap_per_head),
                "pnp": list(self.pnp_per_head),
                "structure": list(self.structure_per_head),
            },
        }


def _check_heads(est: list[HeadOutput], num_keypoints: int) -> tuple[int, int]:
    if not est:
        raise ValueError("need at least one head output")
    h, w = est[0].resolution
    for head in est:
        if head.num_keypoints != num_keypoints:
            raise ValueError(
                f"head has {head.num_keypoints} keypoints, expected {num_keypoints}"
            )
        if head.resolution != (h, w):
            raise ValueError("all heads must share one resolution")
    return h, w


def _heatmap_head(
    head: HeadOutput, gt_norm: list[np.ndarray], beta: float
) -> tuple[float, np.ndarray]:
    """Per-head scaled MSE and its gradient w.r.t. the head's cells."""
    k = len(gt_norm)
    hh, ww = head.resolution
    cells = k * hh * ww
    acc = 0.0
    grad = np.zeros((k, hh, ww))
    for j, (emap, g) in enumerate(zip(head.keypoint_maps, gt_norm)):
        m = emap.values.max()
        if m <= 0:
            raise DegenerateHeatmap("estimated heatmap has non-positive max")
        x = emap.values / m
        diff = beta * x - beta * g
        acc += float((diff * diff).sum())
        # d(mean((x - g)^2)) / d(cell), including the max-cell term of the
        # normalization x = e / max(e).
        d = x - g
        grad[j] = (2.0 / (cells * m)) * d
        jmax = np.unravel_index(int(np.argmax(emap.values)), (hh, ww))
        grad[j][jmax] -= (2.0 / (cells * m)) * float((d * x).sum())
    return acc / (cells * beta**2), grad


def heatmap_loss(
    est: list[HeadOutput], gt_heatmaps: list[Heatmap], w: LossWeights
) -> tuple[float, list[np.ndarray]]:
    """Scaled MSE between max-normalized predicted and ground-truth heatmaps.

    Both sides are max-normalized, the comparison is made at scale ``beta``
    and the squared differences averaged over pixels, keypoints and heads,
    scaled by ``1 / beta^2``.

    Returns the loss and, per head, the gradient w.r.t. every predicted cell.

    Raises:
        DegenerateHeatmap: when any map (predicted or ground truth) has a
            non-positive maximum.
    """
    per_head, grads = _heatmap_parts(est, gt_heatmaps, w)
    return float(np.mean(per_head)), grads


def _heatmap_parts(est, gt_heatmaps, w):
    k = len(gt_heatmaps)
    hh, ww = _check_heads(est, k)
    gt_norm = []
    for g in gt_heatmaps:
        if g.values.shape != (hh, ww):
            raise ValueError("ground-truth heatmaps must match the estimate size")
        m = g.values.max()
        if m <= 0:
            raise DegenerateHeatmap("ground-truth heatmap has non-positive max")
        gt_norm.append(g.values / m)
    n = len(est)
    per_head = []
    grads = []
    for head in est:
        value, grad = _heatmap_head(head, gt_norm, w.beta)
        per_head.append(value)
        grads.append(grad / n)
    return per_head, grads


def _decode_head(head: HeadOutput, cfg: HeatmapConfig):
    points = []
    grads = []
    for m in head.keypoint_maps:
        p, dp = soft_argmax_with_grad(m, cfg)
        points.append(p)
        grads.append(dp)
    return np.array(points), grads


def _solve_loss_pose(
    world: np.ndarray, pixels: np.ndarray, cam: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """EPnP initialization + tight Gauss-Newton on all correspondences."""
    try:
        r, t = _epnp_rt(world, pixels, cam)
    except (DegenerateConfiguration, TooFewPoints) as exc:
        raise PnPFailure(str(exc)) from exc
    return gauss_newton_refine(
        r, t, world, pixels, cam, max_iters=_LOSS_GN_ITERS, step_tol=_LOSS_GN_TOL
    )


def _pose_hessian(
    r: np.ndarray,
    t: np.ndarray,
    world: np.ndarray,
    pixels: np.ndarray,
    cam: CameraIntrinsics,
):
    """Exact second-order blocks of the reprojection objective at a pose.

    For ``f(theta, p) = sum_k ||pi_k(theta) - p_k||^2`` in the chart
    ``R <- exp([w]x) R, t <- t + dt`` centered at the pose, returns
    ``(hess, mixed, jac, proj)``: the 6x6 Hessian d2f/dtheta2, the 6x2K mixed
    block d2f/(dtheta dp), the per-point (K, 2, 6) projection Jacobians and
    the (K, 2) projections.
    """
    x, dpi, jac = pose_jacobian(r, t, world, cam)
    k = world.shape[0]
    z = x[:, 2]
    proj = np.stack(
        [cam.fx * x[:, 0] / z + cam.cx, cam.fy * x[:, 1] / z + cam.cy], axis=1
    )
    res = proj - pixels
    y = x - t

    hess = np.zeros((6, 6))
    mixed = np.zeros((6, 2 * k))
    eye = np.eye(3)
    for i in range(k):
        ji = jac[i]  # (2, 6)
        hess += 2.0 * ji.T @ ji
        mixed[:, 2 * i : 2 * i + 2] = -2.0 * ji.T

        # Second derivative of the projection w.r.t. the camera point.
        zi = z[i]
        d2u = np.zeros((3, 3))
        d2u[0, 2] = d2u[2, 0] = -cam.fx / zi**2
        d2u[2, 2] = 2.0 * cam.fx * x[i, 0] / zi**3
        d2v = np.zeros((3, 3))
        d2v[1, 2] = d2v[2, 1] = -cam.fy / zi**2
        d2v[2, 2] = 2.0 * cam.fy * x[i, 1] / zi**3

        yi = y[i]
        dx = np.zeros((3, 6))
        dx[:, 0:3] = -np.array(
            [[0.0, -yi[2], yi[1]], [yi[2], 0.0, -yi[0]], [-yi[1], yi[0], 0.0]]
        )
        dx[:, 3:6] = eye

        # Curvature of the chart itself: second derivative of exp([w]x) y.
        chart = np.zeros((3, 6, 6))
        for d in range(3):
            m = 0.5 * (np.outer(eye[d], yi) + np.outer(yi, eye[d])) - yi[d] * eye
            chart[d, 0:3, 0:3] = m

        for c, d2 in enumerate((d2u, d2v)):
            hpi = dx.T @ d2 @ dx + np.einsum("d,dab->ab", dpi[i, c], chart)
            hess += 2.0 * res[i, c] * hpi
    return hess, mixed, jac, proj


def _pnp_head(
    head: HeadOutput,
    gt: np.ndarray,
    model: KeypointModel,
    cam: CameraIntrinsics,
    cfg: HeatmapConfig,
) -> tuple[float, np.ndarray]:
    k = model.points.shape[0]
    hh, ww = head.resolution
    p_est, sag = _decode_head(head, cfg)
    r, t = _solve_loss_pose(model.points, p_est, cam)
    hess, mixed, jac, proj = _pose_hessian(r, t, model.points, p_est, cam)

    cond = float(np.linalg.cond(hess))
    if not np.isfinite(cond) or cond > HESSIAN_COND_LIMIT:
        raise IllConditionedHessian(cond)
    damped = hess + HESSIAN_DAMPING * np.eye(6)

    a = gt - proj
    b = p_est - proj
    value = float((a * a).mean() + (b * b).mean())

    # d(loss)/d(theta) through the reprojections, then back to the decoded
    # pixels via d(theta)/d(p) = -H^-1 B plus the direct term.
    dl_dproj = (-2.0 * a - 2.0 * b) / (2.0 * k)
    dl_dtheta = np.einsum("kcj,kc->j", jac, dl_dproj)
    dtheta_dp = -np.linalg.solve(damped, mixed)
    dl_dp = 2.0 * b / (2.0 * k) + (dtheta_dp.T @ dl_dtheta).reshape(k, 2)

    grad = np.zeros((k, hh, ww))
    for j in range(k):
        grad[j] = dl_dp[j, 0] * sag[j][0] + dl_dp[j, 1] * sag[j][1]
    return value, grad


def pnp_loss(
    est: list[HeadOutput],
    gt_pixels,
    model: KeypointModel,
    cam: CameraIntrinsics,
    w: LossWeights,
    heatmap_cfg: HeatmapConfig | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Reprojection loss through a backpropagatable PnP solve.

    Per head, keypoints are decoded with the soft-argmax, a pose is fit to all
    K correspondences by Gauss-Newton from an EPnP initialization, and the
    loss compares (a) ground-truth pixels against the pose's reprojections and
    (b) the decoded pixels against the same reprojections.  Gradients flow
    through the decode analytically and through the pose via the implicit
    function theorem.

    Raises:
        PnPFailure: the pose solve failed.
        IllConditionedHessian: stationarity Hessian condition number > 1e12.
    """
    per_head, grads = _pnp_parts(est, gt_pixels, model, cam, w, heatmap_cfg)
    return float(np.mean(per_head)), grads


def _pnp_parts(est, gt_pixels, model, cam, w, heatmap_cfg):
    cfg = heatmap_cfg or HeatmapConfig()
    gt = np.asarray(gt_pixels, dtype=float)
    k = model.points.shape[0]
    _check_heads(est, k)
    if gt.shape != (k, 2):
        raise ValueError(f"gt_pixels must have shape {(k, 2)}")
    n = len(est)
    per_head = []
    grads = []
    for head in est:
        value, grad = _pnp_head(head, gt, model, cam, cfg)
        per_head.append(value)
        grads.append(grad / n)
    return per_head, grads


def _structure_head(
    head: HeadOutput,
    gt: np.ndarray,
    r_ref: np.ndarray,
    t_ref: np.ndarray,
    model: KeypointModel,
    cam: CameraIntrinsics,
    cfg: HeatmapConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    if head.depth_maps is None:
        raise ValueError("structure loss requires depth maps")
    k = model.points.shape[0]
    hh, ww = head.resolution
    p_est, sag = _decode_head(head, cfg)
    depths = np.zeros(k)
    depth_support = []
    for j in range(k):
        d, cells = sample_depth_grad(head.depth_maps[j], gt[j])
        if d <= 0:
            raise NonPositiveDepth(j, d)
        depths[j] = d
        depth_support.append(cells)
    p3d = lift(p_est, depths, cam)

    tf = umeyama_align(p3d, model.points)
    r, t = tf.rotation, tf.translation
    value = float(((r - r_ref) ** 2).mean() + ((t - t_ref) ** 2).mean())

    # Implicit differentiation of the alignment.  With H the target-source
    # cross-covariance of the centered clouds, optimality of R on SO(3) is
    # symmetry of S = R^T H; perturbing one source coordinate gives
    # dH = tc_k e_c^T, and the rotation response solves
    # (tr(S) I - S) delta = vee(R^T dH - dH^T R), with dR = R [delta]x.
    mu_s = p3d.mean(axis=0)
    tc = model.points - model.points.mean(axis=0)
    cov = tc.T @ (p3d - mu_s)
    s_mat = r.T @ cov
    m_mat = np.trace(s_mat) * np.eye(3) - 0.5 * (s_mat + s_mat.T)
    try:
        m_inv = np.linalg.inv(m_mat)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfiguration(
            "alignment is not differentiable for this cloud"
        ) from exc

    gr = 2.0 * (r - r_ref) / 9.0
    gt_vec = 2.0 * (t - t_ref) / 3.0
    rt_gr = r.T @ gr  # so that sum(gr * (R [d]x)) = sum((R^T gr) * [d]x)

    eye = np.eye(3)
    g_all = tc @ r  # rows are R^T tc_k
    dl_dsource = np.zeros((k, 3))
    for j in range(k):
        for c in range(3):
            delta = m_inv @ np.cross(eye[c], g_all[j])
            sk = np.array(
                [
                    [0.0, -delta[2], delta[1]],
                    [delta[2], 0.0, -delta[0]],
                    [-delta[1], delta[0], 0.0],
                ]
            )
            dt = -(r @ sk) @ mu_s - r[:, c] / k
            dl_dsource[j, c] = float((rt_gr * sk).sum()) + float(gt_vec @ dt)

    # Chain source points back to (u, v, depth).
    dl_du = dl_dsource[:, 0] * depths / cam.fx
    dl_dv = dl_dsource[:, 1] * depths / cam.fy
    dl_dd = (
        dl_dsource[:, 0] * (p_est[:, 0] - cam.cx) / cam.fx
        + dl_dsource[:, 1] * (p_est[:, 1] - cam.cy) / cam.fy
        + dl_dsource[:, 2]
    )

    mgrad = np.zeros((k, hh, ww))
    dgrad = np.zeros((k, hh, ww))
    for j in range(k):
        mgrad[j] = dl_du[j] * sag[j][0] + dl_dv[j] * sag[j][1]
        for (iv, iu), weight in depth_support[j].items():
            dgrad[j, iv, iu] += dl_dd[j] * weight
    return value, mgrad, dgrad


def structure_loss(
    est: list[HeadOutput],
    gt_pose: Pose,
    gt_pixels,
    model: KeypointModel,
    cam: CameraIntrinsics,
    w: LossWeights,
    heatmap_cfg: HeatmapConfig | None = None,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """3D alignment loss on lifted keypoints, differentiating the closed-form
    rigid alignment.

    Decoded keypoints are lifted with depths sampled (bilinearly) from the
    depth head at the ground-truth pixel positions, aligned to the model
    points, and the resulting transform compared elementwise against the
    inverse of the ground-truth pose, which is the transform a perfect lift
    produces.

    Returns the loss, per-head gradients w.r.t. keypoint-map cells, and
    per-head gradients w.r.t. depth-map cells.

    Raises:
        NonPositiveDepth: a sampled depth is <= 0.
        DegenerateConfiguration: the lifted cloud cannot be aligned or its
            alignment is not differentiable.
    """
    per_head, mg, dg = _structure_parts(
        est, gt_pose, gt_pixels, model, cam, w, heatmap_cfg
    )
    return float(np.mean(per_head)), mg, dg


def _structure_parts(est, gt_pose, gt_pixels, model, cam, w, heatmap_cfg):
    cfg = heatmap_cfg or HeatmapConfig()
    gt = np.asarray(gt_pixels, dtype=float)
    k = model.points.shape[0]
    _check_heads(est, k)
    if gt.shape != (k, 2):
        raise ValueError(f"gt_pixels must have shape {(k, 2)}")
    inv = pose_inverse(gt_pose)
    n = len(est)
    per_head = []
    map_grads = []
    depth_grads = []
    for head in est:
        value, mgrad, dgrad = _structure_head(
            head, gt, inv.rotation, inv.translation, model, cam, cfg
        )
        per_head.append(value)
        map_grads.append(mgrad / n)
        depth_grads.append(dgrad / n)
    return per_head, map_grads, depth_grads


def combined_loss(
    est: list[HeadOutput],
    gt_pose: Pose,
    gt_heatmaps: list[Heatmap],
    gt_pixels,
    model: KeypointModel,
    cam: CameraIntrinsics,
    w: LossWeights,
    heatmap_cfg: HeatmapConfig | None = None,
) -> tuple[LossReport, list[np.ndarray], list[np.ndarray]]:
    """Weighted sum of the three losses and of their gradients.

    Returns the report, per-head gradients w.r.t. keypoint-map cells, and
    per-head gradients w.r.t. depth-map cells.
    """
    h_heads, gh = _heatmap_parts(est, gt_heatmaps, w)
    p_heads, gp = _pnp_parts(est, gt_pixels, model, cam, w, heatmap_cfg)
    s_heads, gs_maps, gs_depth = _structure_parts(
        est, gt_pose, gt_pixels, model, cam, w, heatmap_cfg
    )
    h = float(np.mean(h_heads))
    p = float(np.mean(p_heads))
    s = float(np.mean(s_heads))
    total = h + w.gamma1 * p + w.gamma2 * s

    map_grads = [
        gh[i] + w.gamma1 * gp[i] + w.gamma2 * gs_maps[i] for i in range(len(est))
    ]
    depth_grads = [w.gamma2 * g for g in gs_depth]
    report = LossReport(
        heatmap_loss=h,
        pnp_loss=p,
        structure_loss=s,
        total=total,
        heatmap_per_head=tuple(h_heads),
        pnp_per_head=tuple(p_heads),
        structure_per_head=tuple(s_heads),
    )
    return report, map_grads, depth_grads
