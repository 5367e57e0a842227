"""Bit-exact persistence and visualization.

All multi-byte numbers are little-endian. Frame sequences are directories
of zero-padded ``frame_000123.pgm`` files.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .looming import LoomingMap
from .flow import FlowField
from .raster import ColorFrame, Frame

FLO_SENTINEL = np.float32(202021.25)
FLO_INVALID = np.float32(1e9)
LMAP_MAGIC = "LOOM"
FRAME_PATTERN = re.compile(r"^frame_(\d{6})\.pgm$")


def _round_half_up(a: np.ndarray) -> np.ndarray:
    return np.floor(a + 0.5)


# ---------------------------------------------------------------- PGM / PPM

def write_pgm(frame: Frame, path) -> None:
    """Binary P5, maxval 255; intensities rounded half-up."""
    pix = frame.pixels
    if pix.min() < 0 or pix.max() > 255:
        raise ValueError("PGM intensities must lie in [0, 255]")
    data = _round_half_up(pix).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _read_header_tokens(fh, count: int) -> list[bytes]:
    """Whitespace-separated header tokens, with # comments skipped."""
    tokens: list[bytes] = []
    while len(tokens) < count:
        ch = fh.read(1)
        if not ch:
            raise FormatError("truncated header")
        if ch.isspace():
            continue
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        token = ch
        while True:
            ch = fh.read(1)
            if not ch or ch.isspace():
                break
            token += ch
        tokens.append(token)
    return tokens


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(2) != magic:
            raise FormatError(f"{path}: not a {magic.decode()} file")
        try:
            width, height, maxval = (int(t) for t in _read_header_tokens(fh, 3))
        except ValueError as exc:
            raise FormatError(f"{path}: malformed header") from exc
        if width < 1 or height < 1:
            raise FormatError(f"{path}: bad dimensions {width}x{height}")
        if maxval != 255:
            raise FormatError(f"{path}: maxval must be 255, got {maxval}")
        payload = fh.read(width * height * channels)
        if len(payload) != width * height * channels:
            raise FormatError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        return data.reshape(height, width)
    return data.reshape(height, width, channels)


def read_pgm(path) -> Frame:
    return Frame(_read_netpbm(path, b"P5", 1))


def write_ppm(color: ColorFrame, path) -> None:
    """Binary P6 companion of write_pgm, used for visualization output."""
    rgb = color.rgb
    if rgb.min() < 0 or rgb.max() > 255:
        raise ValueError("PPM intensities must lie in [0, 255]")
    data = _round_half_up(rgb).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{color.width} {color.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> ColorFrame:
    return ColorFrame(_read_netpbm(path, b"P6", 3))


def frame_filename(index: int) -> str:
    return f"frame_{index:06d}.pgm"


def write_frame_sequence(frames, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = directory / frame_filename(i)
        write_pgm(frame, p)
        paths.append(p)
    return paths


def read_frame_sequence(directory) -> list[Frame]:
    """Frames from a directory, ordered by their zero-padded index."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    entries = []
    for p in directory.iterdir():
        m = FRAME_PATTERN.match(p.name)
        if m:
            entries.append((int(m.group(1)), p))
    if not entries:
        raise FormatError(f"{directory}: no frame_NNNNNN.pgm files found")
    frames = []
    for index, p in sorted(entries):
        frame = read_pgm(p)
        frame.time_index = index
        frames.append(frame)
    return frames


# ----------------------------------------------------------------- .flo

def write_flo(flow: FlowField, path) -> None:
    """Interchange flow format: float32 sentinel, int32 dims, interleaved (du, dv).

    Invalid pixels are stored as (1e9, 1e9).
    """
    if not (np.isfinite(flow.du).all() and np.isfinite(flow.dv).all()):
        raise ValueError("flow values must be finite to serialize")
    data = np.empty((flow.height, flow.width, 2), dtype="<f4")
    data[:, :, 0] = flow.du
    data[:, :, 1] = flow.dv
    data[~flow.valid] = FLO_INVALID
    with open(path, "wb") as fh:
        fh.write(FLO_SENTINEL.astype("<f4").tobytes())
        fh.write(np.array([flow.width, flow.height], dtype="<i4").tobytes())
        fh.write(data.tobytes())


def read_flo(path) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError(f"{path}: too short for a flow header")
    sentinel = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if sentinel != FLO_SENTINEL:
        raise FormatError(f"{path}: bad sentinel {sentinel!r}")
    width, height = np.frombuffer(raw, dtype="<i4", count=2, offset=4)
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    expected = 12 + 8 * int(width) * int(height)
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(int(height), int(width), 2)
    invalid = (data[:, :, 0] == FLO_INVALID) & (data[:, :, 1] == FLO_INVALID)
    du = data[:, :, 0].astype(np.float64)
    dv = data[:, :, 1].astype(np.float64)
    du[invalid] = 0.0
    dv[invalid] = 0.0
    return FlowField(du, dv, ~invalid)


# ----------------------------------------------------------------- .lmap

def write_lmap(m: LoomingMap, path) -> None:
    """ASCII header line, then float32 ratios and 0/1 validity bytes."""
    with open(path, "wb") as fh:
        fh.write(f"{LMAP_MAGIC} 1 {m.width} {m.height} {m.mode}\n".encode("ascii"))
        fh.write(m.ratio.astype("<f4").tobytes())
        fh.write(m.valid.astype(np.uint8).tobytes())


def read_lmap(path, expected_mode: str | None = None) -> LoomingMap:
    with open(path, "rb") as fh:
        header = fh.readline()
        body = fh.read()
    parts = header.decode("ascii", errors="replace").split()
    if len(parts) != 5 or parts[0] != LMAP_MAGIC:
        raise FormatError(f"{path}: bad looming-map header {header!r}")
    if parts[1] != "1":
        raise FormatError(f"{path}: unsupported version {parts[1]}")
    try:
        width, height = int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed dimensions") from exc
    mode = parts[4]
    if mode not in ("pixel", "angular"):
        raise FormatError(f"{path}: unknown mode token {mode!r}")
    if expected_mode is not None and mode != expected_mode:
        raise FormatError(f"{path}: mode is {mode!r}, expected {expected_mode!r}")
    n = width * height
    if len(body) != 5 * n:
        raise FormatError(f"{path}: payload is {len(body)} bytes, expected {5 * n}")
    ratio = np.frombuffer(body, dtype="<f4", count=n).reshape(height, width)
    valid = np.frombuffer(body, dtype=np.uint8, offset=4 * n).reshape(height, width)
    return LoomingMap(ratio.copy(), valid.astype(bool), mode)


# ----------------------------------------------------------- visualization

MAGENTA = (255.0, 0.0, 255.0)


def render_viz(m: LoomingMap) -> ColorFrame:
    """Grayscale ramp g = round(255 (1/2 + atan(R)/pi)); invalid pixels magenta.

    Near-zero ratios render mid-gray, saturated ratios near white/black, so
    the stationary-world pattern shows a dark vertical pillar against
    bright horizontal bands.
    """
    gray = _round_half_up(255.0 * (0.5 + np.arctan(m.ratio.astype(np.float64)) / np.pi))
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    rgb[~m.valid] = MAGENTA
    return ColorFrame(rgb)


# ------------------------------------------------------------------- IMU

@dataclass(eq=False)
class ImuSeries:
    """Accelerometer samples with strictly increasing timestamps (seconds)."""

    timestamps: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.ax = np.asarray(self.ax, dtype=np.float64)
        self.ay = np.asarray(self.ay, dtype=np.float64)
        self.az = np.asarray(self.az, dtype=np.float64)
        n = self.timestamps.size
        if n < 2:
            raise ValueError(f"IMU series needs at least 2 samples, got {n}")
        if not (self.ax.size == self.ay.size == self.az.size == n):
            raise ValueError("IMU columns must have equal length")
        if not (np.diff(self.timestamps) > 0).all():
            raise ValueError("IMU timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.timestamps.size


IMU_HEADER = ("t", "ax", "ay", "az")


def read_imu_csv(path) -> ImuSeries:
    """Parse a ``t,ax,ay,az`` CSV export; rejects non-monotonic time."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = tuple(col.strip() for col in lines[0].split(","))
    if header != IMU_HEADER:
        raise FormatError(f"{path}: header must be 't,ax,ay,az', got {lines[0]!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric cell") from exc
    if len(rows) < 2:
        raise FormatError(f"{path}: need at least 2 data rows, got {len(rows)}")
    arr = np.array(rows, dtype=np.float64)
    if not (np.diff(arr[:, 0]) > 0).all():
        raise FormatError(f"{path}: timestamps must be strictly increasing")
    return ImuSeries(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
