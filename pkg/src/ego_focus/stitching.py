"""Chaining of independently estimated pose batches into one stream.

Upstream estimators process overlapping windows of L frames (adjacent
windows share O frames) and each window arrives in its own arbitrary
local frame. The stitcher locks gravity (pitch and roll stay whatever
each window estimated) and carries only a yaw + translation correction
across each boundary, anchored at a single shared frame, so that the
anchor's camera center is preserved exactly. The first window defines
the global frame; every later window emits only its new (non-overlap)
frames, which keeps emitted indices contiguous and gap-free.

State kept between calls is bounded: the trailing O emitted poses plus
counters, never the full history. Residuals over all O shared frames
are appended to ``StitchState.boundary_log``; long-running consumers
are expected to drain that list as they go.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateOrientationError, PlanError
from .geometry import (
    CameraPose,
    GravityYpr,
    RigidTransform,
    decompose_gravity_ypr,
    rotation_about_gravity,
    rotation_angle,
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZE = 60
DEFAULT_OVERLAP = 5

# Segment lengths below this are ignored by the scale estimator.
_SCALE_SEGMENT_FLOOR = 1e-12


@dataclass(frozen=True, slots=True)
class WindowPlan:
    """Window layout: size L, overlap O, optionally the stream length.

    Window k spans ``[k*(L-O), min(k*(L-O) + L, total))``; the last
    window may be short but never empty, and a window only exists if
    the previous one did not already reach ``total``.
    """

    window_size: int = DEFAULT_WINDOW_SIZE
    overlap: int = DEFAULT_OVERLAP
    total_frames: Optional[int] = None

    def __post_init__(self):
        if self.window_size < 1:
            raise PlanError(f"window_size must be >= 1, got {self.window_size}")
        if not 0 <= self.overlap < self.window_size:
            raise PlanError(
                f"overlap must satisfy 0 <= O < L, got O={self.overlap} L={self.window_size}"
            )
        if self.total_frames is not None and self.total_frames < 1:
            raise PlanError(f"total_frames must be >= 1, got {self.total_frames}")

    @property
    def stride(self) -> int:
        return self.window_size - self.overlap

    @property
    def n_windows(self) -> int:
        if self.total_frames is None:
            raise PlanError("n_windows is undefined for an open-ended plan")
        if self.total_frames <= self.window_size:
            return 1
        return 1 + math.ceil((self.total_frames - self.window_size) / self.stride)

    def window_bounds(self, k: int) -> tuple[int, int]:
        """Half-open frame-offset range of window k."""
        if self.total_frames is not None and not 0 <= k < self.n_windows:
            raise PlanError(f"window {k} out of range (plan has {self.n_windows})")
        start = k * self.stride
        end = start + self.window_size
        if self.total_frames is not None:
            end = min(end, self.total_frames)
        return start, end

    def windows(self) -> list[tuple[int, int]]:
        return [self.window_bounds(k) for k in range(self.n_windows)]


def plan_windows(total_frames: int, window_size: int = DEFAULT_WINDOW_SIZE,
                 overlap: int = DEFAULT_OVERLAP) -> WindowPlan:
    """Plan for a stream of known length."""
    if total_frames < 1:
        raise PlanError(f"total_frames must be >= 1, got {total_frames}")
    return WindowPlan(window_size=window_size, overlap=overlap, total_frames=total_frames)


@dataclass(frozen=True, slots=True)
class BoundaryResidual:
    """Per-frame disagreement over one boundary's shared frames.

    Compares the previously emitted poses against the freshly corrected
    batch at the same frames: euclidean center distance and geodesic
    rotation angle. A zero-overlap boundary yields empty arrays.
    """

    boundary_index: int
    frames: tuple[int, ...]
    center_dist: np.ndarray
    rot_angle_rad: np.ndarray


@dataclass(frozen=True, slots=True)
class BoundaryEvent:
    """Correction applied at one boundary plus its residuals."""

    boundary_index: int
    correction: RigidTransform
    correction_ypr: GravityYpr
    scale: float
    residual: BoundaryResidual


@dataclass
class StitchState:
    """Mutable per-stream state threaded through stitch_step calls."""

    window_count: int = 0
    next_start: int = 0
    first_frame: Optional[int] = None
    emitted_count: int = 0
    done: bool = False
    tail: list[CameraPose] = field(default_factory=list)
    boundary_log: list[BoundaryEvent] = field(default_factory=list)
    _warned_no_overlap: bool = False


def anchor_correction(prev_global_anchor: CameraPose,
                      cur_local_anchor: CameraPose) -> RigidTransform:
    """Yaw + translation map from the new batch's frame to the global frame.

    Both poses must describe the same physical frame. Let S_full be the
    full rigid local-to-global map implied by the anchor pair; the
    returned correction keeps only S_full's yaw (pitch and roll stay
    locked to each batch's own gravity estimate) and picks the
    translation that maps the local anchor center exactly onto the
    previously emitted one.
    """
    if prev_global_anchor.frame_index != cur_local_anchor.frame_index:
        raise PlanError(
            f"anchor frames disagree: {prev_global_anchor.frame_index} vs "
            f"{cur_local_anchor.frame_index}"
        )
    s_full_rotation = prev_global_anchor.rotation.T @ cur_local_anchor.rotation
    try:
        yaw = decompose_gravity_ypr(s_full_rotation).yaw
    except DegenerateOrientationError as err:
        logger.warning(
            "boundary at frame %d: correction pitch is degenerate; "
            "using yaw under the roll=0 convention",
            cur_local_anchor.frame_index,
        )
        yaw = err.yaw
    r_yaw = rotation_about_gravity(yaw)
    translation = prev_global_anchor.center - r_yaw @ cur_local_anchor.center
    return RigidTransform(r_yaw, translation)


def _apply_correction(batch: Sequence[CameraPose], correction: RigidTransform,
                      scale: float = 1.0) -> list[CameraPose]:
    """Corrected poses T_global = T_local o correction^-1 (vectorized).

    With scale s != 1 the local translations are rescaled first, the
    standard Sim(3)-style chaining that keeps rotations orthonormal.
    """
    r_loc = np.stack([p.rotation for p in batch])
    t_loc = np.stack([p.translation for p in batch])
    r_glob = np.einsum("nij,kj->nik", r_loc, correction.rotation)
    t_glob = scale * t_loc - np.einsum("nij,j->ni", r_glob, correction.translation)
    r_glob.flags.writeable = False
    t_glob.flags.writeable = False
    return [
        CameraPose._trusted(p.frame_index, r_glob[i], t_glob[i])
        for i, p in enumerate(batch)
    ]


def overlap_residual(prev_emitted: Sequence[CameraPose],
                     corrected_batch: Sequence[CameraPose],
                     boundary_index: int = 0) -> BoundaryResidual:
    """Residuals between previously emitted poses and the corrected batch.

    Both sequences must cover the same frames in the same order; every
    shared frame contributes one row.
    """
    if len(prev_emitted) != len(corrected_batch):
        raise PlanError(
            f"overlap length mismatch: {len(prev_emitted)} vs {len(corrected_batch)}"
        )
    frames = []
    center_dist = np.empty(len(prev_emitted))
    rot_angle = np.empty(len(prev_emitted))
    for i, (a, b) in enumerate(zip(prev_emitted, corrected_batch)):
        if a.frame_index != b.frame_index:
            raise PlanError(
                f"overlap frames disagree at position {i}: {a.frame_index} vs {b.frame_index}"
            )
        frames.append(a.frame_index)
        center_dist[i] = float(np.linalg.norm(a.center - b.center))
        rot_angle[i] = rotation_angle(a.rotation, b.rotation)
    return BoundaryResidual(boundary_index, tuple(frames), center_dist, rot_angle)


def _check_batch(state: StitchState, batch: Sequence[CameraPose], plan: WindowPlan) -> int:
    if len(batch) == 0:
        raise PlanError("empty batch")
    if state.done:
        raise PlanError("plan already completed; no further batches expected")
    frames = [p.frame_index for p in batch]
    for prev, cur in zip(frames, frames[1:]):
        if cur != prev + 1:
            raise PlanError(f"batch frames not contiguous: {prev} followed by {cur}")
    if state.first_frame is None:
        start = 0
    else:
        start = frames[0] - state.first_frame
    if start != state.next_start:
        raise PlanError(
            f"batch starts at offset {start}, plan expects {state.next_start}"
        )
    expected_end = start + plan.window_size
    if plan.total_frames is not None:
        expected_end = min(expected_end, plan.total_frames)
        if start + len(batch) != expected_end:
            raise PlanError(
                f"window at offset {start}: got {len(batch)} frames, plan expects "
                f"{expected_end - start}"
            )
    elif len(batch) > plan.window_size:
        raise PlanError(
            f"window at offset {start}: got {len(batch)} frames, plan allows at most "
            f"{plan.window_size}"
        )
    return start


def _estimate_scale(prev_tail: Sequence[CameraPose], local_overlap: Sequence[CameraPose]) -> float:
    """Median ratio of consecutive-center segment lengths over the overlap."""
    if len(prev_tail) < 2:
        return 1.0
    prev_centers = np.stack([p.center for p in prev_tail])
    local_centers = np.stack([p.center for p in local_overlap])
    prev_seg = np.linalg.norm(np.diff(prev_centers, axis=0), axis=1)
    local_seg = np.linalg.norm(np.diff(local_centers, axis=0), axis=1)
    usable = local_seg > _SCALE_SEGMENT_FLOOR
    if not np.any(usable):
        return 1.0
    return float(np.median(prev_seg[usable] / local_seg[usable]))


def stitch_step(state: StitchState, batch: Sequence[CameraPose], plan: WindowPlan,
                anchor_mode: str = "last",
                scale_correction: bool = False) -> tuple[StitchState, list[CameraPose]]:
    """Fold one window into the global stream.

    The first window is emitted verbatim and defines the global frame.
    Every later window is aligned through its anchor (the last shared
    frame by default, the first with anchor_mode="first") and emits
    only the frames past the overlap. Returns the updated state and
    the newly emitted, globally aligned poses.
    """
    if anchor_mode not in ("first", "last"):
        raise PlanError(f"anchor_mode must be 'first' or 'last', got {anchor_mode!r}")
    start = _check_batch(state, batch, plan)
    overlap = plan.overlap

    if state.window_count == 0:
        state.first_frame = batch[0].frame_index
        emitted = list(batch)
    elif overlap == 0:
        if not state._warned_no_overlap:
            logger.warning(
                "overlap is 0: windows are emitted as-is, inter-batch drift "
                "cannot be corrected"
            )
            state._warned_no_overlap = True
        emitted = list(batch)
    else:
        anchor_idx = overlap - 1 if anchor_mode == "last" else 0
        prev_anchor = state.tail[anchor_idx]
        correction = anchor_correction(prev_anchor, batch[anchor_idx])
        scale = _estimate_scale(state.tail, batch[:overlap]) if scale_correction else 1.0
        corrected = _apply_correction(batch, correction, scale)
        residual = overlap_residual(state.tail, corrected[:overlap],
                                    boundary_index=state.window_count - 1)
        state.boundary_log.append(
            BoundaryEvent(
                boundary_index=state.window_count - 1,
                correction=correction,
                correction_ypr=decompose_gravity_ypr(correction.rotation),
                scale=scale,
                residual=residual,
            )
        )
        emitted = corrected[overlap:]

    if overlap > 0:
        state.tail = (state.tail + emitted)[-overlap:]
    state.window_count += 1
    state.emitted_count += len(emitted)
    end = start + len(batch)
    state.next_start = start + plan.stride
    if plan.total_frames is not None and end >= plan.total_frames:
        state.done = True
    elif plan.total_frames is None and len(batch) < plan.window_size:
        # A short window can only be the final one.
        state.done = True
    return state, emitted
