"""Acceleration-derived focus points and Gaussian focus maps.

The discrete world acceleration at frame t is the second difference of
camera centers, a_w = p_t - 2 p_{t-1} + p_{t-2}; rotating it into the
current camera frame (a_c = R_t a_w) and projecting through the
pinhole model (u = cx + fx * ax / az, v = cy + fy * ay / az) gives the
pixel the ego-motion is currently "aimed" at. A map aggregates the
trailing window of N focus points as a sum of Gaussian kernels whose
widths scale with each sample's acceleration magnitude relative to the
window median.

Everything here is causal: the map for frame t depends only on frames
<= t. The first two frames of a stream produce no sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import (
    DEFAULT_EPS_Z,
    CameraPose,
    Intrinsics,
    project_pinhole,
    project_pinhole_many,
)

DEFAULT_FOCUS_N = 15
SIGMA_WIDTH_FRACTION = 0.04
DEFAULT_S_CLAMP = (0.25, 4.0)
DEFAULT_TRUNCATION_RADIUS = 3.0
DEFAULT_DEPTH_ALPHA = 0.15

# Floors the median normalizer against an all-zero window. A floor
# (not an additive term) so that scaling every magnitude by a common
# factor leaves the ratios, and hence the rendered maps, unchanged.
_MEDIAN_GUARD = 1e-12


@dataclass(frozen=True, slots=True)
class FocusConfig:
    """Knobs for focus-point extraction and map rendering.

    sigma_px = None resolves to SIGMA_WIDTH_FRACTION * image width at
    render time. project_negative chooses what happens to samples whose
    camera-frame acceleration points backward: "skip" drops them,
    "mirror" projects through the principal point instead.
    """

    n_points: int = DEFAULT_FOCUS_N
    sigma_px: Optional[float] = None
    eps_z: float = DEFAULT_EPS_Z
    s_clamp: tuple[float, float] = DEFAULT_S_CLAMP
    truncation_radius: float = DEFAULT_TRUNCATION_RADIUS
    normalize: str = "peak"
    project_negative: str = "skip"
    smooth_positions: bool = False

    def __post_init__(self):
        if self.n_points < 1:
            raise ConfigError("n_points", f"must be >= 1, got {self.n_points}")
        if self.sigma_px is not None and not self.sigma_px > 0:
            raise ConfigError("sigma_px", f"must be > 0, got {self.sigma_px}")
        if self.eps_z < 0:
            raise ConfigError("eps_z", f"must be >= 0, got {self.eps_z}")
        lo, hi = self.s_clamp
        if not 0 < lo <= hi:
            raise ConfigError("s_clamp", f"must satisfy 0 < lo <= hi, got {self.s_clamp}")
        if not self.truncation_radius > 0:
            raise ConfigError("truncation_radius", f"must be > 0, got {self.truncation_radius}")
        if self.normalize not in ("peak", "sum"):
            raise ConfigError("normalize", f"must be 'peak' or 'sum', got {self.normalize!r}")
        if self.project_negative not in ("skip", "mirror"):
            raise ConfigError(
                "project_negative", f"must be 'skip' or 'mirror', got {self.project_negative!r}"
            )

    def resolved_sigma(self, width: int) -> float:
        return self.sigma_px if self.sigma_px is not None else SIGMA_WIDTH_FRACTION * width


def default_sigma_px(width: int) -> float:
    """Kernel width rule: a fixed fraction of the image width."""
    return SIGMA_WIDTH_FRACTION * width


@dataclass(frozen=True, slots=True)
class MotionSample:
    """Discrete acceleration of one frame; camera part may be pending.

    v_prev and v_cur are the per-frame world displacements p_{t-1}-p_{t-2}
    and p_t-p_{t-1}; a_world = v_cur - v_prev exactly (same floating-point
    expression, so the identity holds bitwise, not just approximately).
    """

    frame_index: int
    a_world: np.ndarray
    v_prev: Optional[np.ndarray] = None
    v_cur: Optional[np.ndarray] = None
    a_camera: Optional[np.ndarray] = None
    magnitude: Optional[float] = None


@dataclass(frozen=True, slots=True)
class FocusPoint:
    """Projected acceleration of one frame.

    u and v are None when the sample was not projectable; magnitude is
    kept either way so kernel scaling stays defined for the window.
    """

    frame_index: int
    u: Optional[float]
    v: Optional[float]
    magnitude: float
    projectable: bool


def acceleration_world(p_t: np.ndarray, p_prev: np.ndarray, p_prev2: np.ndarray,
                       frame_index: int) -> MotionSample:
    """Second difference of camera centers at frame t."""
    p_t = np.asarray(p_t, dtype=np.float64).reshape(3)
    p_prev = np.asarray(p_prev, dtype=np.float64).reshape(3)
    p_prev2 = np.asarray(p_prev2, dtype=np.float64).reshape(3)
    v_cur = p_t - p_prev
    v_prev = p_prev - p_prev2
    a = v_cur - v_prev
    return MotionSample(frame_index=frame_index, a_world=a, v_prev=v_prev, v_cur=v_cur)


def acceleration_camera(sample: MotionSample, pose: CameraPose) -> MotionSample:
    """Rotate a world acceleration into the camera frame of its pose."""
    if pose.frame_index != sample.frame_index:
        raise ValueError(
            f"pose frame {pose.frame_index} does not match sample frame {sample.frame_index}"
        )
    # einsum, not @: bitwise-identical to the vectorized stream path
    a_c = np.einsum("ij,j->i", pose.rotation, sample.a_world)
    magnitude = math.sqrt((a_c[0] * a_c[0] + a_c[1] * a_c[1]) + a_c[2] * a_c[2])
    return replace(sample, a_camera=a_c, magnitude=magnitude)


def focus_point(sample: MotionSample, k: Intrinsics, cfg: FocusConfig) -> FocusPoint:
    """Project a completed sample; never raises on backward acceleration."""
    if sample.a_camera is None:
        raise ValueError("sample has no camera-frame acceleration yet")
    uv = project_pinhole(
        sample.a_camera, k, eps_z=cfg.eps_z,
        allow_negative=(cfg.project_negative == "mirror"),
    )
    if uv is None:
        return FocusPoint(sample.frame_index, None, None, sample.magnitude, False)
    return FocusPoint(sample.frame_index, uv[0], uv[1], sample.magnitude, True)


@dataclass(frozen=True, slots=True)
class FocusMap:
    """Rendered focus map.

    values is (height, width) float64 in [0, 1]; with peak
    normalization the maximum is 1 whenever contributing_points >= 1.
    contributing_points counts projectable points whose truncated
    kernel actually intersected the image.
    """

    values: np.ndarray
    contributing_points: int

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _kernel_scales(magnitudes: np.ndarray, s_clamp: tuple[float, float]) -> np.ndarray:
    """Per-point width multipliers, median-normalized and clamped."""
    median = float(np.median(magnitudes))
    return np.clip(magnitudes / max(median, _MEDIAN_GUARD), s_clamp[0], s_clamp[1])


def _render_arrays(us: np.ndarray, vs: np.ndarray, mags: np.ndarray,
                   width: int, height: int, sigma: float, cfg: FocusConfig) -> FocusMap:
    """Accumulate truncated separable Gaussian kernels and normalize.

    Each kernel is evaluated on the axis-aligned window
    |du|, |dv| <= truncation_radius * sigma * s_i and is exactly zero
    outside it; the largest neglected value is exp(-truncation^2 / 2)
    (about 0.011 at the default radius of 3), pre-normalization.
    """
    acc = np.zeros((height, width))
    contributing = 0
    if us.size:
        scales = _kernel_scales(mags, cfg.s_clamp)
        for u, v, s in zip(us, vs, scales):
            sd = sigma * s
            half = cfg.truncation_radius * sd
            x0 = max(0, math.ceil(u - half))
            x1 = min(width - 1, math.floor(u + half))
            y0 = max(0, math.ceil(v - half))
            y1 = min(height - 1, math.floor(v + half))
            if x0 > x1 or y0 > y1:
                continue
            dx = np.arange(x0, x1 + 1, dtype=np.float64) - u
            dy = np.arange(y0, y1 + 1, dtype=np.float64) - v
            denom = 2.0 * sd * sd
            row = np.exp(-(dx * dx) / denom)
            col = np.exp(-(dy * dy) / denom)
            acc[y0:y1 + 1, x0:x1 + 1] += col[:, None] * row[None, :]
            contributing += 1
    if contributing:
        z = float(acc.max()) if cfg.normalize == "peak" else float(acc.sum())
        if z > 0.0:
            acc /= z
    acc.flags.writeable = False
    return FocusMap(values=acc, contributing_points=contributing)


def render_focus_map(points: Sequence[FocusPoint], k: Intrinsics, cfg: FocusConfig) -> FocusMap:
    """Render the trailing window of focus points at the intrinsics' size.

    Non-projectable points are ignored (their magnitudes do not enter
    the median either); zero projectable points yield an all-zero map.
    """
    proj = [p for p in points if p.projectable]
    us = np.array([p.u for p in proj], dtype=np.float64)
    vs = np.array([p.v for p in proj], dtype=np.float64)
    mags = np.array([p.magnitude for p in proj], dtype=np.float64)
    sigma = cfg.resolved_sigma(k.width)
    return _render_arrays(us, vs, mags, k.width, k.height, sigma, cfg)


def modulate_depth(depth: np.ndarray, fmap: FocusMap,
                   alpha: float = DEFAULT_DEPTH_ALPHA) -> np.ndarray:
    """Attenuate depth by focus: out = depth * (alpha + (1 - alpha) * M).

    alpha is the floor kept in unfocused regions; 1 returns the input.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("depth_alpha", f"must be in [0, 1], got {alpha}")
    d = np.asarray(depth, dtype=np.float64)
    if d.shape != fmap.values.shape:
        raise ValueError(f"depth shape {d.shape} does not match map {fmap.values.shape}")
    return d * (alpha + (1.0 - alpha) * fmap.values)


@dataclass(slots=True)
class MotionBlock:
    """Vectorized batch of motion samples (one row per frame)."""

    frames: np.ndarray
    a_world: np.ndarray
    a_camera: np.ndarray
    magnitude: np.ndarray
    uv: np.ndarray
    projectable: np.ndarray

    def __len__(self) -> int:
        return len(self.frames)

    def focus_points(self) -> list[FocusPoint]:
        out = []
        for i in range(len(self.frames)):
            ok = bool(self.projectable[i])
            out.append(
                FocusPoint(
                    frame_index=int(self.frames[i]),
                    u=float(self.uv[i, 0]) if ok else None,
                    v=float(self.uv[i, 1]) if ok else None,
                    magnitude=float(self.magnitude[i]),
                    projectable=ok,
                )
            )
        return out


class MotionStream:
    """Streaming, chunk-vectorized variant of the per-sample routines.

    Feed pose chunks in frame order; each call returns the samples that
    became complete. Results are bit-identical however the stream is
    chunked, and match the scalar acceleration_world /
    acceleration_camera / focus_point path.
    """

    def __init__(self, k: Intrinsics, cfg: FocusConfig):
        self.k = k
        self.cfg = cfg
        self._raw: list[np.ndarray] = []      # last <= 4 raw centers
        self._seq: list[np.ndarray] = []      # last <= 2 differencing inputs
        self._positions = 0                   # frames consumed so far

    def _smoothed(self, raw: np.ndarray, first_pos: int) -> np.ndarray:
        """Causal moving average, width 3, partial at the stream head."""
        n = raw.shape[0]
        out = np.empty_like(raw)
        for i in range(n):
            pos = first_pos + i
            if pos == 0:
                out[i] = raw[i]
            elif pos == 1:
                out[i] = (raw[i] + raw[i - 1]) / 2.0
            else:
                out[i] = ((raw[i] + raw[i - 1]) + raw[i - 2]) / 3.0
        return out

    def push(self, poses: Sequence[CameraPose]) -> MotionBlock:
        if len(poses) == 0:
            return _empty_block()
        rs = np.stack([p.rotation for p in poses])
        ts = np.stack([p.translation for p in poses])
        centers = -np.einsum("nji,nj->ni", rs, ts)

        carried = len(self._raw)
        raw = np.concatenate([np.stack(self._raw), centers]) if carried else centers
        if self.cfg.smooth_positions:
            # Positions of `raw` start at self._positions - carried.
            seq_new = self._smoothed(raw, self._positions - carried)[carried:]
        else:
            seq_new = centers
        n_ctx = len(self._seq)
        seq = np.concatenate([np.stack(self._seq), seq_new]) if n_ctx else seq_new

        # Sample for chunk row i uses seq rows (i+n_ctx) down to (i+n_ctx-2).
        if seq.shape[0] < 3:
            block = _empty_block()
        else:
            # Same expression as acceleration_world so both paths agree bitwise.
            a_w = (seq[2:] - seq[1:-1]) - (seq[1:-1] - seq[:-2])
            skip = 2 - n_ctx  # leading chunk rows without two predecessors
            rs_s = rs[skip:]
            frames = np.array([p.frame_index for p in poses[skip:]], dtype=np.int64)
            a_c = np.einsum("nij,nj->ni", rs_s, a_w)
            mag = np.sqrt((a_c[:, 0] * a_c[:, 0] + a_c[:, 1] * a_c[:, 1]) + a_c[:, 2] * a_c[:, 2])
            uv, valid = project_pinhole_many(
                a_c, self.k, eps_z=self.cfg.eps_z,
                allow_negative=(self.cfg.project_negative == "mirror"),
            )
            block = MotionBlock(frames, a_w, a_c, mag, uv, valid)

        self._positions += len(poses)
        self._raw = list(raw[-4:])
        self._seq = list(seq[-2:])
        return block


def _empty_block() -> MotionBlock:
    return MotionBlock(
        frames=np.empty(0, dtype=np.int64),
        a_world=np.empty((0, 3)),
        a_camera=np.empty((0, 3)),
        magnitude=np.empty(0),
        uv=np.empty((0, 2)),
        projectable=np.empty(0, dtype=bool),
    )
