"""EPnP with Gauss-Newton refinement and an adaptive RANSAC loop.

The solver recovers the target-to-camera transform from 2D-3D
correspondences.  EPnP expresses the world points as barycentric combinations
of four control points (centroid plus principal axes), solves the camera-frame
control points from the null space of the projection constraints, and reads
the pose off a rigid alignment.  A short Gauss-Newton polish on reprojection
error follows every solve, including RANSAC hypothesis fits.

Near-coplanar world configurations are rejected rather than routed to a
planar-case solver; the 11-point spacecraft model is non-coplanar by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateConfiguration, TooFewPoints
from .geometry import MIN_DEPTH, CameraIntrinsics, Pose
from .alignment import _umeyama_rt

_COPLANAR_TOL = 1e-6
_POLISH_ITERS = 10
_POLISH_STEP_TOL = 1e-10


@dataclass(frozen=True)
class RansacConfig:
    """RANSAC-EPnP convergence controls.

    ``confidence`` is the probability of sampling at least one all-inlier
    minimal set; ``reproj_threshold`` (pixels) is the maximum distance between
    a point and its reprojection to count as an inlier.
    """

    confidence: float = 0.999
    reproj_threshold: float = 2.0
    max_iterations: int = 100
    min_inliers: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.reproj_threshold <= 0:
            raise ValueError("reproj_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_inliers < 4:
            raise ValueError("min_inliers must be >= 4")


@dataclass(frozen=True)
class PnPResult:
    """Robust solve outcome: pose, per-correspondence inlier mask, mean
    inlier reprojection error (pixels, inf when no inlier), convergence flag.
    """

    pose: Pose
    inlier_mask: np.ndarray
    mean_reproj_error: float
    converged: bool

    def __post_init__(self):
        m = np.asarray(self.inlier_mask, dtype=bool).copy()
        m.setflags(write=False)
        object.__setattr__(self, "inlier_mask", m)

    @property
    def num_inliers(self) -> int:
        return int(self.inlier_mask.sum())


def _skew_stack(y: np.ndarray) -> np.ndarray:
    """(n, 3, 3) cross-product matrices for row vectors ``y``."""
    n = y.shape[0]
    s = np.zeros((n, 3, 3))
    s[:, 0, 1] = -y[:, 2]
    s[:, 0, 2] = y[:, 1]
    s[:, 1, 0] = y[:, 2]
    s[:, 1, 2] = -y[:, 0]
    s[:, 2, 0] = -y[:, 1]
    s[:, 2, 1] = y[:, 0]
    return s


def rodrigues(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix ``exp([omega]x)`` of an axis-angle vector."""
    theta2 = float(omega @ omega)
    s = _skew_stack(omega[None, :])[0]
    if theta2 < 1e-16:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return np.eye(3) + a * s + b * (s @ s)


def _project_rt(r: np.ndarray, t: np.ndarray, world: np.ndarray,
                cam: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Camera-frame points and their pixel projections (no depth guard)."""
    x = world @ r.T + t
    z = x[:, 2]
    px = np.stack([cam.fx * x[:, 0] / z + cam.cx,
                   cam.fy * x[:, 1] / z + cam.cy], axis=1)
    return x, px


def pose_jacobian(r: np.ndarray, t: np.ndarray, world: np.ndarray,
                  cam: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Projection residual Jacobian blocks for a left-multiplicative pose
    perturbation ``R <- exp([w]x) R, t <- t + dt``.

    Returns ``(x, dpi, jac)``: camera-frame points (n, 3), per-point pixel
    derivative w.r.t. the camera point (n, 2, 3), and the stacked (n, 2, 6)
    Jacobian w.r.t. ``(w, dt)``.
    """
    x = world @ r.T + t
    z = x[:, 2]
    n = world.shape[0]
    dpi = np.zeros((n, 2, 3))
    dpi[:, 0, 0] = cam.fx / z
    dpi[:, 0, 2] = -cam.fx * x[:, 0] / z**2
    dpi[:, 1, 1] = cam.fy / z
    dpi[:, 1, 2] = -cam.fy * x[:, 1] / z**2
    y = x - t
    jac = np.concatenate([-np.einsum("nij,njk->nik", dpi, _skew_stack(y)),
                          dpi], axis=2)
    return x, dpi, jac


def gauss_newton_refine(
    r: np.ndarray,
    t: np.ndarray,
    world: np.ndarray,
    pixels: np.ndarray,
    cam: CameraIntrinsics,
    max_iters: int = _POLISH_ITERS,
    step_tol: float = _POLISH_STEP_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton minimization of reprojection error from a given pose.

    Stops at the iteration cap, when the step norm falls below ``step_tol``,
    or when the update would push points behind the camera / the normal
    system turns singular.
    """
    r = r.copy()
    t = t.copy()
    fx, fy = cam.fx, cam.fy
    n = world.shape[0]
    j = np.empty((2 * n, 6))
    res = np.empty(2 * n)
    for _ in range(max_iters):
        x = world @ r.T + t
        z = x[:, 2]
        if (z <= MIN_DEPTH).any():
            break
        iz = 1.0 / z
        a = fx * iz
        b = fy * iz
        c = -a * x[:, 0] * iz
        d = -b * x[:, 1] * iz
        res[0::2] = a * x[:, 0] + (cam.cx - pixels[:, 0])
        res[1::2] = b * x[:, 1] + (cam.cy - pixels[:, 1])
        y = x - t
        # Rows of dpi @ [-[y]x | I] written out per pixel coordinate.
        j[0::2, 0] = c * y[:, 1]
        j[0::2, 1] = a * y[:, 2] - c * y[:, 0]
        j[0::2, 2] = -a * y[:, 1]
        j[0::2, 3] = a
        j[0::2, 4] = 0.0
        j[0::2, 5] = c
        j[1::2, 0] = -b * y[:, 2] + d * y[:, 1]
        j[1::2, 1] = -d * y[:, 0]
        j[1::2, 2] = b * y[:, 0]
        j[1::2, 3] = 0.0
        j[1::2, 4] = b
        j[1::2, 5] = d
        try:
            step = np.linalg.solve(j.T @ j, -(j.T @ res))
        except np.linalg.LinAlgError:
            break
        r = rodrigues(step[:3]) @ r
        t = t + step[3:]
        if float(step @ step) < step_tol * step_tol:
            break
    return r, t


def _control_points(world: np.ndarray) -> np.ndarray:
    """Centroid + principal-axis control points; rejects rank-deficient sets."""
    centroid = world.mean(axis=0)
    centered = world - centroid
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    evals = np.maximum(evals, 0.0)
    s = np.sqrt(evals[::-1])  # descending singular values of the point cloud
    if s[0] <= 0 or s[-1] / s[0] < _COPLANAR_TOL:
        raise DegenerateConfiguration(
            "world points are (near-)coplanar or coincident"
        )
    axes = evecs[:, ::-1].T * (s / math.sqrt(world.shape[0]))[:, None]
    return np.vstack([centroid + axes, centroid])


def _barycentric(world: np.ndarray, ctrl: np.ndarray) -> np.ndarray:
    """(n, 4) homogeneous barycentric coordinates w.r.t. the control points."""
    a = np.vstack([ctrl.T, np.ones(4)])
    b = np.vstack([world.T, np.ones(world.shape[0])])
    try:
        return np.linalg.solve(a, b).T
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfiguration("control-point system is singular") from exc


def _constraint_matrix(pixels: np.ndarray, alphas: np.ndarray,
                       cam: CameraIntrinsics) -> np.ndarray:
    """(2n, 12) projection constraint matrix over camera control points."""
    n = pixels.shape[0]
    m = np.zeros((2 * n, 12))
    du = cam.cx - pixels[:, 0]
    dv = cam.cy - pixels[:, 1]
    for j in range(4):
        m[0::2, 3 * j] = alphas[:, j] * cam.fx
        m[0::2, 3 * j + 2] = alphas[:, j] * du
        m[1::2, 3 * j + 1] = alphas[:, j] * cam.fy
        m[1::2, 3 * j + 2] = alphas[:, j] * dv
    return m


_PAIRS = list(combinations(range(4), 2))
_PI = np.array([i for i, j in _PAIRS])
_PJ = np.array([j for i, j in _PAIRS])


def _pairwise_dist(ctrl: np.ndarray, squared: bool = False) -> np.ndarray:
    d = ctrl[_PI] - ctrl[_PJ]
    d = np.einsum("ij,ij->i", d, d)
    return d if squared else np.sqrt(d)


def _beta_l_matrix(v: np.ndarray) -> np.ndarray:
    """(6, 10) linearized distance constraints over the 4 null vectors.

    Column order of the linearized betas:
    B11 B12 B13 B14 B22 B23 B24 B33 B34 B44.
    """
    vs = v.T.reshape(4, 4, 3)  # [null vector, control point, xyz]
    dv = vs[:, _PI, :] - vs[:, _PJ, :]  # (4, 6, 3)
    g = np.einsum("apc,bpc->pab", dv, dv)  # (6, 4, 4)
    l = np.empty((6, 10))
    l[:, 0] = g[:, 0, 0]
    l[:, 4] = g[:, 1, 1]
    l[:, 7] = g[:, 2, 2]
    l[:, 9] = g[:, 3, 3]
    l[:, 1] = 2.0 * g[:, 0, 1]
    l[:, 2] = 2.0 * g[:, 0, 2]
    l[:, 3] = 2.0 * g[:, 0, 3]
    l[:, 5] = 2.0 * g[:, 1, 2]
    l[:, 6] = 2.0 * g[:, 1, 3]
    l[:, 8] = 2.0 * g[:, 2, 3]
    return l


def _lsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(a.T @ a, a.T @ b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]


def _betas_case2(l: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cols = l[:, [0, 1, 4]]
    sol = _lsq(cols, rho)
    betas = np.zeros(4)
    betas[0] = math.sqrt(abs(sol[0]))
    sign = -1.0 if (sol[0] > 0) != (sol[1] > 0) else 1.0
    betas[1] = sign * math.sqrt(abs(sol[2]))
    return betas


def _betas_case3(l: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cols = l[:, [0, 1, 2, 4, 5, 7]]
    sol = _lsq(cols, rho)
    betas = np.zeros(4)
    betas[0] = math.sqrt(abs(sol[0]))
    sign1 = -1.0 if (sol[0] > 0) != (sol[1] > 0) else 1.0
    betas[1] = sign1 * math.sqrt(abs(sol[3]))
    sign2 = -1.0 if (sol[0] > 0) != (sol[2] > 0) else 1.0
    betas[2] = sign2 * math.sqrt(abs(sol[5]))
    return betas


def _epnp_rt(world: np.ndarray, pixels: np.ndarray,
             cam: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Core EPnP + polish on raw arrays; returns (R, t)."""
    n = world.shape[0]
    if n < 4:
        raise TooFewPoints(f"EPnP needs >= 4 correspondences, got {n}")
    ctrl = _control_points(world)
    alphas = _barycentric(world, ctrl)
    m = _constraint_matrix(pixels, alphas, cam)
    _, vecs = np.linalg.eigh(m.T @ m)
    null4 = vecs[:, :4]  # ascending eigenvalues: strongest null vector first

    dist_w = _pairwise_dist(ctrl)
    rho = _pairwise_dist(ctrl, squared=True)
    l = _beta_l_matrix(null4)

    candidates = [
        np.array([1.0, 0.0, 0.0, 0.0]),
        _betas_case2(l, rho),
        _betas_case3(l, rho),
    ]

    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for betas in candidates:
        cc = (null4 @ betas).reshape(4, 3)
        dist_c = _pairwise_dist(cc)
        denom = float(dist_c @ dist_c)
        if denom <= 0:
            continue
        cc = cc * float(dist_c @ dist_w) / denom
        pc = alphas @ cc
        if pc[:, 2].sum() < 0:
            pc = -pc
        try:
            r, t = _umeyama_rt(world, pc)
        except DegenerateConfiguration:
            continue
        err = _mean_error_or_inf(r, t, world, pixels, cam)
        if best is None or err < best[0]:
            best = (err, r, t)
    if best is None:
        raise DegenerateConfiguration("no EPnP candidate produced a pose")

    err0, r, t = best
    r2, t2 = gauss_newton_refine(r, t, world, pixels, cam)
    if _mean_error_or_inf(r2, t2, world, pixels, cam) <= err0:
        r, t = r2, t2
    return r, t


def _mean_error_or_inf(r, t, world, pixels, cam) -> float:
    errs = _safe_errors(r, t, world, pixels, cam)
    return float(errs.mean())


def _safe_errors(r, t, world, pixels, cam) -> np.ndarray:
    """Per-point reprojection distances; inf for points at/behind the camera."""
    x = world @ r.T + t
    z = x[:, 2]
    errs = np.full(world.shape[0], np.inf)
    ok = z > MIN_DEPTH
    if ok.any():
        u = cam.fx * x[ok, 0] / z[ok] + cam.cx
        v = cam.fy * x[ok, 1] / z[ok] + cam.cy
        d = np.stack([u, v], axis=1) - pixels[ok]
        errs[ok] = np.linalg.norm(d, axis=1)
    return errs


def epnp(world, pixels, cam: CameraIntrinsics) -> Pose:
    """Pose from >= 4 non-coplanar 2D-3D correspondences.

    The EPnP algebraic solution is polished by at most 10 Gauss-Newton
    iterations on reprojection error.

    Raises:
        TooFewPoints: fewer than 4 correspondences.
        DegenerateConfiguration: rank-deficient world configuration.
    """
    w = np.atleast_2d(np.asarray(world, dtype=float))
    p = np.atleast_2d(np.asarray(pixels, dtype=float))
    if w.shape[0] != p.shape[0]:
        raise ValueError("world and pixels must have the same length")
    r, t = _epnp_rt(w, p, cam)
    return Pose(r, t)


def reprojection_error(pose: Pose, world, pixels, cam: CameraIntrinsics) -> np.ndarray:
    """Euclidean pixel distance between each projection and its observation.

    Raises:
        NonPositiveDepth: when any world point falls at or behind the camera.
    """
    from .geometry import project

    w = np.atleast_2d(np.asarray(world, dtype=float))
    p = np.atleast_2d(np.asarray(pixels, dtype=float))
    proj = project(w, pose, cam)
    return np.linalg.norm(proj - p, axis=1)


def _adaptive_bound(confidence: float, inlier_ratio: float, cap: int) -> int:
    fail = 1.0 - inlier_ratio**4
    if fail <= 0.0:
        return 0
    if fail >= 1.0:
        return cap
    need = math.log(1.0 - confidence) / math.log(fail)
    return min(cap, int(math.ceil(need)))


def ransac_epnp(world, pixels, cam: CameraIntrinsics,
                cfg: RansacConfig) -> PnPResult:
    """Robust pose fit: EPnP hypotheses from random minimal sets of 4.

    Hypotheses are scored by inlier count under ``reproj_threshold`` (ties by
    total inlier error); the iteration budget shrinks adaptively with the best
    inlier ratio seen, capped at ``max_iterations``.  The best hypothesis is
    refit on all of its inliers and the final mask recomputed.  Identical
    inputs and seed give bit-identical results.

    Raises:
        TooFewPoints: fewer than 4 correspondences.
    """
    w = np.atleast_2d(np.asarray(world, dtype=float))
    p = np.atleast_2d(np.asarray(pixels, dtype=float))
    n = w.shape[0]
    if n < 4:
        raise TooFewPoints(f"RANSAC needs >= 4 correspondences, got {n}")

    rng = np.random.default_rng(cfg.rng_seed)
    best_rt: tuple[np.ndarray, np.ndarray] | None = None
    best_count = 0
    best_inlier_err = np.inf
    bound = cfg.max_iterations
    drawn = 0
    solved: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray] | None] = {}
    while drawn < bound:
        idx = np.sort(rng.choice(n, size=4, replace=False))
        drawn += 1
        key = tuple(int(i) for i in idx)
        if key not in solved:
            try:
                solved[key] = _epnp_rt(w[idx], p[idx], cam)
            except DegenerateConfiguration:
                solved[key] = None
        if solved[key] is None:
            continue
        r, t = solved[key]
        errs = _safe_errors(r, t, w, p, cam)
        mask = errs <= cfg.reproj_threshold
        count = int(mask.sum())
        inlier_err = float(errs[mask].sum()) if count else np.inf
        if count > best_count or (count == best_count
                                  and inlier_err < best_inlier_err):
            best_rt = (r, t)
            best_count = count
            best_inlier_err = inlier_err
            bound = min(bound, max(drawn,
                                   _adaptive_bound(cfg.confidence, count / n,
                                                   cfg.max_iterations)))

    if best_rt is None or best_count < 4:
        return PnPResult(Pose.identity(), np.zeros(n, dtype=bool), np.inf, False)

    r, t = best_rt
    mask = _safe_errors(r, t, w, p, cam) <= cfg.reproj_threshold
    if mask.sum() >= 4:
        try:
            r, t = _epnp_rt(w[mask], p[mask], cam)
        except DegenerateConfiguration:
            pass
    errs = _safe_errors(r, t, w, p, cam)
    mask = errs <= cfg.reproj_threshold
    count = int(mask.sum())
    mean_err = float(errs[mask].mean()) if count else np.inf
    converged = count >= cfg.min_inliers and mean_err <= cfg.reproj_threshold
    return PnPResult(Pose(r, t), mask, mean_err, converged)
