"""Temporal alignment of accelerometer data with video.

The video-side signal is the mean vertical image motion per frame pair
(lifting the camera produces global vertical flow); the IMU side is the
gravity-corrected z acceleration, resampled to the frame clock and matched
by normalized cross-correlation over integer frame lags.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError
from .flow import FlowField
from .formats import ImuSeries

MIN_PEAK = 0.2


@dataclass(eq=False)
class MotionTrace:
    """Per-frame scalar motion signal sampled at a fixed frame rate."""

    values: np.ndarray
    fps: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size < 2:
            raise ValueError(f"trace needs at least 2 samples, got {self.values.size}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return self.values.size


@dataclass
class OffsetEstimate:
    """Seconds by which the IMU clock trails the video clock, plus the correlation peak."""

    offset_s: float
    peak: float


def vertical_motion_series(flows: Sequence[FlowField], fps: float = 30.0) -> MotionTrace:
    """Mean vertical displacement over valid pixels, one value per flow field."""
    if len(flows) < 2:
        raise ValueError(f"need at least 2 flow fields, got {len(flows)}")
    values = []
    for i, flow in enumerate(flows):
        n = int(flow.valid.sum())
        if n == 0:
            raise ValueError(f"flow field {i} has no valid pixels")
        values.append(float(flow.dv[flow.valid].mean()))
    return MotionTrace(np.array(values), fps)


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.sqrt(float(np.sum(a * a)) * float(np.sum(b * b)))
    if denom == 0:
        return 0.0
    return float(np.sum(a * b) / denom)


def estimate_offset(
    imu: ImuSeries,
    trace: MotionTrace,
    fps: float | None = None,
    search_window: float = 3.0,
) -> OffsetEstimate:
    """Clock offset between the IMU and the video, in seconds.

    The median of az is removed as gravity bias, the series is linearly
    resampled onto the frame clock starting at the first IMU timestamp, and
    normalized cross-correlation is evaluated at integer frame lags within
    +-search_window. A positive offset means an event appears later on the
    IMU clock than on the video clock. Raises AlignmentError when the peak
    correlation stays below 0.2.
    """
    fps = trace.fps if fps is None else float(fps)
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if search_window <= 0:
        raise ValueError(f"search_window must be positive, got {search_window}")
    imu_span = float(imu.timestamps[-1] - imu.timestamps[0])
    trace_span = (len(trace) - 1) / fps
    if imu_span < 2.0 * search_window or trace_span < 2.0 * search_window:
        raise ValueError(
            f"signals must cover at least twice the search window "
            f"({2 * search_window:.3g} s); IMU spans {imu_span:.3g} s, trace {trace_span:.3g} s"
        )

    az = imu.az - np.median(imu.az)
    t0 = imu.timestamps[0]
    n_imu = int(np.floor(imu_span * fps)) + 1
    frame_times = t0 + np.arange(n_imu) / fps
    az_frames = np.interp(frame_times, imu.timestamps, az)

    sig = trace.values - trace.values.mean()
    max_lag = int(np.ceil(search_window * fps))
    best_lag = 0
    best_corr = -np.inf
    for lag in range(-max_lag, max_lag + 1):
        lo = max(0, -lag)
        hi = min(len(sig), len(az_frames) - lag)
        if hi - lo < 2:
            continue
        c = _ncc(sig[lo:hi], az_frames[lo + lag:hi + lag])
        if c > best_corr:
            best_corr = c
            best_lag = lag
    if not np.isfinite(best_corr) or best_corr < MIN_PEAK:
        raise AlignmentError(
            f"correlation peak {best_corr:.3f} below {MIN_PEAK}; signals appear unrelated"
        )
    return OffsetEstimate(best_lag / fps, best_corr)
