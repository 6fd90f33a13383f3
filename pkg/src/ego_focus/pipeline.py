"""End-to-end streaming pipeline: poses in, focus maps out.

The stream is windowed, stitched into one global trajectory, converted
to focus points, and rendered frame by frame. State is bounded by the
window size, the trailing point window and the map resolution, never
by stream length; outputs are written per frame through atomic
temp-file renames, so an interrupted run leaves only complete files.

Rendering (and only rendering) can fan out over a small thread pool,
sized by the EGO_FOCUS_THREADS environment variable (0 = auto). Each
frame's map is computed by exactly one worker with a fixed internal
order, so results are byte-identical for any thread count.
"""

from __future__ import annotations

import os
import resource
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import CameraPose, Intrinsics
from .motion import (
    DEFAULT_DEPTH_ALPHA,
    DEFAULT_FOCUS_N,
    FocusConfig,
    MotionStream,
    _render_arrays,
    modulate_depth,
)
from .stitching import (
    DEFAULT_OVERLAP,
    DEFAULT_WINDOW_SIZE,
    StitchState,
    WindowPlan,
    stitch_step,
)
from . import streams

THREADS_ENV_VAR = "EGO_FOCUS_THREADS"
_MAX_AUTO_THREADS = 8


def resolve_threads(value: Optional[int]) -> int:
    """Worker count: explicit value, else EGO_FOCUS_THREADS, else 1."""
    if value is None:
        raw = os.environ.get(THREADS_ENV_VAR, "")
        if raw == "":
            value = 1
        else:
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(THREADS_ENV_VAR, f"must be an integer, got {raw!r}")
    if value < 0:
        raise ConfigError("threads", f"must be >= 0, got {value}")
    if value == 0:
        return min(_MAX_AUTO_THREADS, os.cpu_count() or 1)
    return value


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Pipeline configuration; defaults match the module constants."""

    window_size: int = DEFAULT_WINDOW_SIZE
    overlap: int = DEFAULT_OVERLAP
    focus_n: int = DEFAULT_FOCUS_N
    sigma_px: Optional[float] = None
    eps_z: float = 1e-6
    normalize: str = "peak"
    project_negative: str = "skip"
    smooth_positions: bool = False
    anchor_mode: str = "last"
    scale_correction: bool = False
    map_scale: int = 1
    emit_float_maps: bool = False
    depth_alpha: float = DEFAULT_DEPTH_ALPHA
    threads: Optional[int] = None

    def __post_init__(self):
        if self.map_scale < 1:
            raise ConfigError("map_scale", f"must be >= 1, got {self.map_scale}")
        if self.anchor_mode not in ("first", "last"):
            raise ConfigError("anchor_mode", f"must be 'first' or 'last', got {self.anchor_mode!r}")
        # Window constraints are validated by WindowPlan, focus knobs by
        # FocusConfig; build both eagerly so bad values fail here.
        self.plan()
        self.focus_config()

    def plan(self, total_frames: Optional[int] = None) -> WindowPlan:
        return WindowPlan(self.window_size, self.overlap, total_frames)

    def focus_config(self) -> FocusConfig:
        return FocusConfig(
            n_points=self.focus_n,
            sigma_px=self.sigma_px,
            eps_z=self.eps_z,
            normalize=self.normalize,
            project_negative=self.project_negative,
            smooth_positions=self.smooth_positions,
        )


@dataclass(slots=True)
class RunSummary:
    """Counters and rates reported after a run."""

    frames_in: int = 0
    windows: int = 0
    frames_emitted: int = 0
    samples: int = 0
    points_projected: int = 0
    points_skipped: int = 0
    maps_written: int = 0
    zero_maps: int = 0
    boundaries: int = 0
    max_center_residual: float = 0.0
    max_rotation_residual_rad: float = 0.0
    wall_seconds: float = 0.0
    poses_per_second: float = 0.0
    maps_per_second: float = 0.0
    peak_rss_bytes: int = 0

    def lines(self) -> list[str]:
        return [f"{key}={getattr(self, key)}" for key in (
            "frames_in", "windows", "frames_emitted", "samples", "points_projected",
            "points_skipped", "maps_written", "zero_maps", "boundaries",
            "max_center_residual", "max_rotation_residual_rad", "wall_seconds",
            "poses_per_second", "maps_per_second", "peak_rss_bytes",
        )]


def iter_windows(poses: Iterable[CameraPose], window_size: int = DEFAULT_WINDOW_SIZE,
                 overlap: int = DEFAULT_OVERLAP) -> Iterator[list[CameraPose]]:
    """Chunk a flat pose stream into the planned overlapping windows.

    Matches WindowPlan enumeration: full windows share `overlap`
    frames; a final partial window is emitted only if it carries new
    frames beyond the shared ones.
    """
    WindowPlan(window_size, overlap)  # validate the pair
    buf: list[CameraPose] = []
    yielded = False
    for pose in poses:
        buf.append(pose)
        if len(buf) == window_size:
            yield list(buf)
            yielded = True
            buf = buf[window_size - overlap:] if overlap else []
    carried = overlap if yielded else 0
    if len(buf) > carried or (buf and not yielded):
        yield list(buf)


class _FrameWriter:
    """Renders one frame's window of points and writes its files."""

    def __init__(self, out_dir: str, map_k: Intrinsics, sigma: float, cfg: FocusConfig,
                 emit_float: bool, depth_dir: Optional[str], depth_alpha: float):
        self.out_dir = out_dir
        self.map_k = map_k
        self.sigma = sigma
        self.cfg = cfg
        self.emit_float = emit_float
        self.depth_dir = depth_dir
        self.depth_alpha = depth_alpha

    def __call__(self, frame: int, us: np.ndarray, vs: np.ndarray, mags: np.ndarray) -> int:
        fmap = _render_arrays(us, vs, mags, self.map_k.width, self.map_k.height,
                              self.sigma, self.cfg)
        streams.write_pgm(fmap.values, os.path.join(self.out_dir, streams.focus_map_name(frame)))
        if self.emit_float:
            streams.write_focus_map_float(
                fmap.values, os.path.join(self.out_dir, streams.focus_map_name(frame, "mfm"))
            )
        if self.depth_dir is not None:
            depth_path = os.path.join(self.depth_dir, streams.depth_input_name(frame))
            depth = streams.read_depth_map(depth_path).astype(np.float64)
            out = modulate_depth(depth, fmap, self.depth_alpha)
            streams.write_depth_map(
                out.astype(np.float32),
                os.path.join(self.out_dir, streams.depth_output_name(frame)),
            )
        return fmap.contributing_points


def run_stream(poses: Iterable[CameraPose], intrinsics: Intrinsics, cfg: RunConfig,
               out_dir: str, residuals_path: Optional[str] = None,
               depth_dir: Optional[str] = None) -> RunSummary:
    """Run the full pipeline on a flat, contiguous pose stream."""
    counter = _CountingIterator(poses)
    batches = iter_windows(counter, cfg.window_size, cfg.overlap)
    summary = run_stream_batches(batches, intrinsics, cfg, out_dir,
                                 residuals_path=residuals_path, depth_dir=depth_dir)
    summary.frames_in = counter.count
    return summary


class _CountingIterator:
    def __init__(self, inner: Iterable):
        self._inner = iter(inner)
        self.count = 0

    def __iter__(self):
        return self

    def __next__(self):
        item = next(self._inner)
        self.count += 1
        return item


def run_stream_batches(batches: Iterable[Sequence[CameraPose]], intrinsics: Intrinsics,
                       cfg: RunConfig, out_dir: str,
                       residuals_path: Optional[str] = None,
                       depth_dir: Optional[str] = None) -> RunSummary:
    """Run the pipeline on pre-built windows (one per upstream inference).

    Windows must follow the plan implied by cfg (stride and overlap);
    this is the entry point when each window arrives in its own local
    frame, e.g. from independent per-batch estimators.
    """
    t_start = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    fcfg = cfg.focus_config()
    plan = cfg.plan()
    map_k = intrinsics.scaled(cfg.map_scale)
    sigma = fcfg.resolved_sigma(intrinsics.width) / cfg.map_scale
    writer = _FrameWriter(out_dir, map_k, sigma, fcfg, cfg.emit_float_maps,
                          depth_dir, cfg.depth_alpha)
    n_threads = resolve_threads(cfg.threads)

    state = StitchState()
    motion = MotionStream(intrinsics, fcfg)
    window: deque[tuple[float, float, float, bool]] = deque(maxlen=cfg.focus_n)
    summary = RunSummary()
    residual_writer = streams.ResidualCsvWriter(residuals_path) if residuals_path else None
    points_writer = streams.FocusPointCsvWriter(os.path.join(out_dir, "focus_points.csv"))

    executor: Optional[ThreadPoolExecutor] = None
    pending: deque[Future] = deque()
    max_inflight = 2 * n_threads
    if n_threads > 1:
        executor = ThreadPoolExecutor(max_workers=n_threads)

    def _finish(future_or_count) -> None:
        contributing = future_or_count.result() if isinstance(future_or_count, Future) \
            else future_or_count
        summary.maps_written += 1
        if contributing == 0:
            summary.zero_maps += 1

    try:
        for batch in batches:
            state, emitted = stitch_step(state, batch, plan,
                                         anchor_mode=cfg.anchor_mode,
                                         scale_correction=cfg.scale_correction)
            summary.windows += 1
            summary.frames_emitted += len(emitted)
            for event in state.boundary_log:
                summary.boundaries += 1
                if event.residual.center_dist.size:
                    summary.max_center_residual = max(
                        summary.max_center_residual, float(event.residual.center_dist.max())
                    )
                    summary.max_rotation_residual_rad = max(
                        summary.max_rotation_residual_rad,
                        float(event.residual.rot_angle_rad.max()),
                    )
                if residual_writer is not None:
                    residual_writer.write_residual(event.residual)
            state.boundary_log.clear()

            block = motion.push(emitted)
            summary.samples += len(block)
            n_ok = int(np.count_nonzero(block.projectable))
            summary.points_projected += n_ok
            summary.points_skipped += len(block) - n_ok
            points_writer.write_block(block)

            scale = float(cfg.map_scale)
            for i in range(len(block)):
                ok = bool(block.projectable[i])
                window.append((
                    block.uv[i, 0] / scale if ok else 0.0,
                    block.uv[i, 1] / scale if ok else 0.0,
                    float(block.magnitude[i]),
                    ok,
                ))
                snap = [w for w in window if w[3]]
                us = np.array([w[0] for w in snap])
                vs = np.array([w[1] for w in snap])
                mags = np.array([w[2] for w in snap])
                frame = int(block.frames[i])
                if executor is None:
                    _finish(writer(frame, us, vs, mags))
                else:
                    pending.append(executor.submit(writer, frame, us, vs, mags))
                    while len(pending) >= max_inflight:
                        _finish(pending.popleft())
        while pending:
            _finish(pending.popleft())
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
        if residual_writer is not None:
            residual_writer.close()
        points_writer.close()

    summary.frames_in = summary.frames_in or summary.frames_emitted
    summary.wall_seconds = time.perf_counter() - t_start
    if summary.wall_seconds > 0:
        summary.poses_per_second = summary.frames_emitted / summary.wall_seconds
        summary.maps_per_second = summary.maps_written / summary.wall_seconds
    summary.peak_rss_bytes = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    return summary
