"""Image containers and shared preprocessing.

Frames hold intensities as float64 rather than 8-bit so that quantization
never interacts with the sub-pixel least-squares machinery downstream.
Border policy for every operation in this module is replicate-edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(eq=False)
class Frame:
    """Single-channel intensity raster, row-major, intensities in [0, 255]."""

    pixels: np.ndarray
    time_index: int = 0

    def __post_init__(self) -> None:
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError(f"frame pixels must be a non-empty 2-D array, got shape {self.pixels.shape}")
        if not np.isfinite(self.pixels).all():
            raise ValueError("frame intensities must be finite")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(eq=False)
class ColorFrame:
    """RGB raster with channels in [0, 255], shape (height, width, 3)."""

    rgb: np.ndarray

    def __post_init__(self) -> None:
        self.rgb = np.ascontiguousarray(self.rgb, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or self.rgb.size == 0:
            raise ValueError(f"color frame must have shape (h, w, 3), got {self.rgb.shape}")
        if not np.isfinite(self.rgb).all():
            raise ValueError("color frame intensities must be finite")

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


def to_grayscale(color: ColorFrame) -> Frame:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B, kept in real arithmetic."""
    r, g, b = GRAY_WEIGHTS
    gray = r * color.rgb[:, :, 0] + g * color.rgb[:, :, 1] + b * color.rgb[:, :, 2]
    return Frame(gray)


def _crop_to(frame: Frame, width: int, height: int) -> Frame:
    mx = frame.width - width
    my = frame.height - height
    x0 = mx // 2
    y0 = my // 2
    return Frame(frame.pixels[y0:y0 + height, x0:x0 + width], time_index=frame.time_index)


def center_crop_common(a: Frame, b: Frame) -> tuple[Frame, Frame]:
    """Crop both frames to their common (minimum) dimensions.

    The crop window is centered; an odd margin loses the extra pixel on the
    right/bottom (floor of the half-margin is removed from top/left).
    """
    width = min(a.width, b.width)
    height = min(a.height, b.height)
    return _crop_to(a, width, height), _crop_to(b, width, height)


# Normalized 7-tap Gaussian, sigma 1.0, used as the anti-alias blur before decimation.
_DOWN_TAPS = np.exp(-0.5 * np.arange(-3, 4, dtype=np.float64) ** 2)
_DOWN_TAPS /= _DOWN_TAPS.sum()


def downsample_half(f: Frame) -> Frame:
    """Gaussian pre-blur then keep every second pixel starting at index 0.

    Output dimensions are ceil(dim / 2). Constants pass through unchanged
    (the kernel is normalized) and linear ramps stay linear on the interior.
    """
    if f.width < 2 or f.height < 2:
        raise ValueError(f"frame too small to downsample: {f.width}x{f.height}")
    blurred = ndimage.correlate1d(f.pixels, _DOWN_TAPS, axis=0, mode="nearest")
    blurred = ndimage.correlate1d(blurred, _DOWN_TAPS, axis=1, mode="nearest")
    return Frame(blurred[::2, ::2], time_index=f.time_index)
