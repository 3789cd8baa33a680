"""Heatmap grids: Gaussian rendering, scaling, and hard/soft decoding.

Heatmaps are row-major ``values[v][u]`` grids; decoded coordinates are
``(u, v)`` in heatmap pixels.  When heatmaps are rendered at a coarser
resolution than the image, callers apply the configured scale factor to move
between the two coordinate systems (the default pipeline keeps them equal).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateHeatmap, OutOfBounds, ParseError

HMAP_MAGIC = b"HMAP1"


@dataclass(frozen=True)
class HeatmapConfig:
    """Rendering and decoding parameters.

    ``sigma`` is the Gaussian std-dev in pixels, ``beta`` the scale weight
    applied by :func:`normalize_beta`, and ``temperature`` the soft-argmax
    sharpness applied to the max-normalized map.
    """

    sigma: float = 2.0
    beta: float = 1e3
    temperature: float = 15.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.beta > 0 and self.temperature > 0):
            raise ValueError("sigma, beta and temperature must be positive")


@dataclass(frozen=True)
class Heatmap:
    """A single H x W grid of finite, non-negative responses."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("heatmap values must be a 2D grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap values must be finite")
        if v.min() < 0:
            raise ValueError("heatmap values must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class HeadOutput:
    """One prediction head: K keypoint heatmaps plus K depth grids (metres).

    ``depth_maps`` may be None for heatmap-only sources (HMAP1 channel
    count 1); operations that lift to 3D require it.
    """

    keypoint_maps: tuple[Heatmap, ...]
    depth_maps: np.ndarray | None = None

    def __post_init__(self):
        maps = tuple(self.keypoint_maps)
        if not maps:
            raise ValueError("head must contain at least one keypoint map")
        shape = maps[0].values.shape
        if any(m.values.shape != shape for m in maps):
            raise ValueError("all keypoint maps must share one resolution")
        object.__setattr__(self, "keypoint_maps", maps)
        if self.depth_maps is not None:
            d = np.array(self.depth_maps, dtype=float)
            if d.shape != (len(maps), *shape):
                raise ValueError(
                    f"depth maps must have shape {(len(maps), *shape)}"
                )
            if d.min() <= 0 or not np.all(np.isfinite(d)):
                raise ValueError("depth values must be positive and finite")
            d.setflags(write=False)
            object.__setattr__(self, "depth_maps", d)

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoint_maps)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.keypoint_maps[0].values.shape


def render_gaussian(
    center, cfg: HeatmapConfig, size: tuple[int, int]
) -> Heatmap:
    """Render a circular Gaussian ``exp(-((u-u0)^2+(v-v0)^2) / (2 sigma^2))``.

    The peak cell reaches 1.0 exactly when the center lands on a grid node;
    off-grid centers (including centers outside the grid entirely) simply
    yield the sampled values, which callers filter by response.

    Args:
        center: (u0, v0) in pixels; may lie outside the grid.
        cfg: rendering parameters (only ``sigma`` is used).
        size: (H, W) with H, W >= 8.
    """
    h, w = size
    if h < 8 or w < 8:
        raise ValueError("heatmap size must be at least 8x8")
    u0, v0 = float(center[0]), float(center[1])
    v = np.arange(h, dtype=float)[:, None]
    u = np.arange(w, dtype=float)[None, :]
    d2 = (u - u0) ** 2 + (v - v0) ** 2
    return Heatmap(np.exp(-d2 / (2.0 * cfg.sigma**2)))


def normalize_beta(h: Heatmap, beta: float) -> Heatmap:
    """Scale a heatmap so its maximum equals ``beta``.

    Raises:
        DegenerateHeatmap: when the input maximum is <= 0.
    """
    m = h.values.max()
    if m <= 0:
        raise DegenerateHeatmap("cannot normalize a non-positive heatmap")
    return Heatmap(beta * h.values / m)


def hard_argmax(h: Heatmap) -> tuple[int, int]:
    """Integer (u, v) of the maximum cell; ties break to the smallest
    row-major index.

    Raises:
        DegenerateHeatmap: when the maximum is <= 0.
    """
    if h.values.max() <= 0:
        raise DegenerateHeatmap("cannot decode a non-positive heatmap")
    idx = int(np.argmax(h.values))
    v, u = divmod(idx, h.width)
    return u, v


def _softmax_weights(h: Heatmap, cfg: HeatmapConfig) -> np.ndarray:
    m = h.values.max()
    if m <= 0:
        raise DegenerateHeatmap("cannot decode a non-positive heatmap")
    z = cfg.temperature * h.values / m
    w = np.exp(z - z.max())
    return w / w.sum()


def soft_argmax(h: Heatmap, cfg: HeatmapConfig) -> np.ndarray:
    """Differentiable (u, v) decode: expectation of pixel coordinates under
    the softmax of the temperature-scaled, max-normalized map.

    The result always lies inside ``[0, W-1] x [0, H-1]``.
    """
    w = _softmax_weights(h, cfg)
    u = np.arange(h.width, dtype=float)
    v = np.arange(h.height, dtype=float)
    return np.array([w.sum(axis=0) @ u, w.sum(axis=1) @ v])


def soft_argmax_with_grad(
    h: Heatmap, cfg: HeatmapConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Soft-argmax plus its analytic Jacobian w.r.t. every heatmap cell.

    Returns ``(p, dp)`` with ``p`` of shape (2,) and ``dp`` of shape
    (2, H, W), where ``dp[0]`` is d(u)/d(values) and ``dp[1]`` d(v)/d(values).

    The max-normalization is part of the function, so the Jacobian carries an
    extra term on the argmax cell; it is exact wherever the maximum is unique.
    """
    m = h.values.max()
    if m <= 0:
        raise DegenerateHeatmap("cannot decode a non-positive heatmap")
    s = _softmax_weights(h, cfg)
    hh, ww = h.values.shape
    u = np.arange(ww, dtype=float)[None, :]
    v = np.arange(hh, dtype=float)[:, None]
    pu = float((s * u).sum())
    pv = float((s * v).sum())

    # d p / d z_j = s_j (c_j - p) for logits z; chain z = tau * values / max.
    wu = s * (u - pu)
    wv = s * (v - pv)
    tau_m = cfg.temperature / m
    du = tau_m * wu
    dv = tau_m * wv
    # Extra term on the argmax cell from d(max)/d(values).
    z = cfg.temperature * h.values / m
    jmax = np.unravel_index(int(np.argmax(h.values)), h.values.shape)
    du[jmax] -= (wu * z).sum() / m
    dv[jmax] -= (wv * z).sum() / m
    return np.array([pu, pv]), np.stack([du, dv])


def response_score(h: Heatmap) -> float:
    """Total response: the sum of all cell values."""
    return float(h.values.sum())


def sample_depth(depth_map, at) -> float:
    """Bilinear sample of a depth grid at an (u, v) position.

    Exact for integer positions and reproduces linear ramps.

    Raises:
        OutOfBounds: when the position lies outside ``[0, W-1] x [0, H-1]``.
    """
    d, ((i0, j0), w) = _bilinear_weights(depth_map, at)
    return float(
        w[0, 0] * d[i0, j0]
        + w[0, 1] * d[i0, j0 + 1]
        + w[1, 0] * d[i0 + 1, j0]
        + w[1, 1] * d[i0 + 1, j0 + 1]
    )


def _bilinear_weights(depth_map, at):
    """Clamped cell corner and 2x2 weights for bilinear interpolation."""
    d = np.asarray(depth_map, dtype=float)
    if d.ndim != 2:
        raise ValueError("depth map must be a 2D grid")
    u, v = float(at[0]), float(at[1])
    h, w = d.shape
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
        raise OutOfBounds(f"position ({u}, {v}) outside {w}x{h} grid")
    j0 = min(int(np.floor(u)), w - 2)
    i0 = min(int(np.floor(v)), h - 2)
    fu = u - j0
    fv = v - i0
    weights = np.array(
        [[(1 - fv) * (1 - fu), (1 - fv) * fu], [fv * (1 - fu), fv * fu]]
    )
    return d, ((i0, j0), weights)


def sample_depth_grad(depth_map, at) -> tuple[float, dict[tuple[int, int], float]]:
    """Bilinear sample plus d(sample)/d(cell) for the four support cells."""
    d, ((i0, j0), w) = _bilinear_weights(depth_map, at)
    value = (
        w[0, 0] * d[i0, j0]
        + w[0, 1] * d[i0, j0 + 1]
        + w[1, 0] * d[i0 + 1, j0]
        + w[1, 1] * d[i0 + 1, j0 + 1]
    )
    grads = {
        (i0, j0): float(w[0, 0]),
        (i0, j0 + 1): float(w[0, 1]),
        (i0 + 1, j0): float(w[1, 0]),
        (i0 + 1, j0 + 1): float(w[1, 1]),
    }
    return float(value), grads


def write_hmap(path, heads: list[HeadOutput]) -> None:
    """Write heads to the HMAP1 binary format (atomic, bit-exact).

    Layout: magic ``HMAP1``; little-endian u32 fields N (heads), K
    (keypoints), H, W, C (1 = heatmaps only, 2 = heatmaps then depths); then
    C*N*K*H*W little-endian f32 values ordered [channel][head][keypoint]
    [row][col].
    """
    if not heads:
        raise ValueError("cannot write an empty head list")
    k = heads[0].num_keypoints
    hh, ww = heads[0].resolution
    with_depth = heads[0].depth_maps is not None
    for head in heads:
        if head.num_keypoints != k or head.resolution != (hh, ww):
            raise ValueError("all heads must share K and resolution")
        if (head.depth_maps is not None) != with_depth:
            raise ValueError("all heads must agree on depth presence")
    channels = 2 if with_depth else 1
    kp = np.stack(
        [np.stack([m.values for m in head.keypoint_maps]) for head in heads]
    )
    blocks = [kp]
    if with_depth:
        blocks.append(np.stack([head.depth_maps for head in heads]))
    data = np.stack(blocks).astype("<f4")

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(HMAP_MAGIC)
        f.write(struct.pack("<5I", len(heads), k, hh, ww, channels))
        f.write(data.tobytes(order="C"))
    tmp.replace(path)


def read_hmap(path) -> list[HeadOutput]:
    """Read an HMAP1 file back into HeadOutputs (values promoted to f64)."""
    raw = Path(path).read_bytes()
    if raw[:5] != HMAP_MAGIC:
        raise ParseError(f"{path}: bad magic, expected HMAP1")
    if len(raw) < 25:
        raise ParseError(f"{path}: truncated header")
    n, k, hh, ww, channels = struct.unpack("<5I", raw[5:25])
    if channels not in (1, 2):
        raise ParseError(f"{path}: channel count must be 1 or 2, got {channels}")
    expected = 25 + 4 * channels * n * k * hh * ww
    if len(raw) != expected:
        raise ParseError(
            f"{path}: expected {expected} bytes for {n}x{k}x{hh}x{ww}"
            f"x{channels}, got {len(raw)}"
        )
    data = np.frombuffer(raw[25:], dtype="<f4").astype(float)
    data = data.reshape(channels, n, k, hh, ww)
    heads = []
    for i in range(n):
        maps = tuple(Heatmap(data[0, i, j]) for j in range(k))
        depths = data[1, i] if channels == 2 else None
        heads.append(HeadOutput(maps, depths))
    return heads
