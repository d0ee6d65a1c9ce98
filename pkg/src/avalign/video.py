"""Video motion analysis: frame ingestion, dense-flow magnitude, motion peaks.

Flow is estimated with a self-contained coarse-to-fine gradient method on an
8x8 block grid; the per-frame-pair motion magnitude is the mean Euclidean
norm of the block flow vectors. Motion peaks discard local maxima below a
minimum height so static scenes produce no peaks.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .peaks import PeakSet


class VideoFormatError(ValueError):
    """Raised for unreadable frames, inconsistent dimensions, or bad sidecars."""


@dataclass(frozen=True)
class FrameSequence:
    """Ordered grayscale frames (n, height, width) with intensities in [0, 1]."""

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 3 or frames.shape[0] < 2:
            raise ValueError("need at least 2 frames of identical dimensions")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frame intensities must be finite")
        if frames.min() < 0.0 or frames.max() > 1.0:
            raise ValueError("frame intensities must lie in [0, 1]")
        if self.fps <= 0.0:
            raise ValueError("fps must be positive")

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    @property
    def duration(self) -> float:
        return self.frames.shape[0] / self.fps


@dataclass(frozen=True)
class MotionSeries:
    """Mean flow magnitude (pixels/frame) for each consecutive frame pair."""

    magnitudes: np.ndarray
    fps: float

    def __post_init__(self):
        magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        object.__setattr__(self, "magnitudes", magnitudes)
        if magnitudes.ndim != 1 or magnitudes.size < 1:
            raise ValueError("magnitudes must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(magnitudes)) or np.any(magnitudes < 0.0):
            raise ValueError("magnitudes must be finite and >= 0")
        if self.fps <= 0.0:
            raise ValueError("fps must be positive")

    def __len__(self) -> int:
        return int(self.magnitudes.size)

    @property
    def duration(self) -> float:
        return (self.magnitudes.size + 1) / self.fps


def _read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise VideoFormatError(f"unreadable image {path}: not a P5 PGM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":  # comment runs to end of line
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise VideoFormatError(f"unreadable image {path}: bad header token") from None
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval <= 0 or maxval > 255:
        raise VideoFormatError(f"unreadable image {path}: only 8-bit PGM supported")
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise VideoFormatError(f"unreadable image {path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width) / float(maxval)


def load_frames(path: str | os.PathLike, fps: float) -> FrameSequence:
    """Load grayscale frames from a PGM directory or a raw 8-bit luma stream.

    A directory is read as lexicographically ordered .pgm files (binary P5).
    A `.y` file is read as concatenated 8-bit frames; its dimensions come
    from a sidecar text file at `<path>.dims` containing "WIDTH HEIGHT".
    """
    path = os.fspath(path)
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.lower().endswith(".pgm"))
        if len(names) < 2:
            raise VideoFormatError(f"fewer than 2 frames in {path}")
        frames = [_read_pgm(os.path.join(path, n)) for n in names]
        first = frames[0].shape
        for name, frame in zip(names, frames):
            if frame.shape != first:
                raise VideoFormatError(
                    f"inconsistent dimensions: {name} is {frame.shape[1]}x{frame.shape[0]}, "
                    f"expected {first[1]}x{first[0]}"
                )
        return FrameSequence(np.stack(frames), fps)

    if not os.path.exists(path):
        raise FileNotFoundError(f"missing file: {path}")
    sidecar = path + ".dims"
    if not os.path.exists(sidecar):
        raise VideoFormatError(f"missing sidecar dimensions file: {sidecar}")
    with open(sidecar, "r") as fh:
        tokens = fh.read().split()
    if len(tokens) != 2:
        raise VideoFormatError(f"sidecar {sidecar} must contain 'WIDTH HEIGHT'")
    width, height = int(tokens[0]), int(tokens[1])
    if width < 1 or height < 1:
        raise VideoFormatError("sidecar dimensions must be positive")
    raw = np.fromfile(path, dtype=np.uint8)
    n = raw.size // (width * height)
    if n < 2:
        raise VideoFormatError(f"fewer than 2 frames in {path}")
    frames = raw[:n * width * height].reshape(n, height, width) / 255.0
    return FrameSequence(frames, fps)


@dataclass(frozen=True)
class FlowConfig:
    """Pyramidal block-flow parameters: 8x8 blocks, 3 levels, 3 iterations per level."""

    block: int = 8
    levels: int = 3
    iterations: int = 3
    regularization: float = 1e-4

    def __post_init__(self):
        if min(self.block, self.levels, self.iterations) < 1:
            raise ValueError("block, levels and iterations must be >= 1")
        if self.regularization <= 0.0:
            raise ValueError("regularization must be positive")


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] - img.shape[0] % 2, img.shape[1] - img.shape[1] % 2
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def _resize_grid(field: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = np.kron(field, np.ones((2, 2)))
    if out.shape[0] < shape[0]:
        out = np.vstack([out, np.repeat(out[-1:, :], shape[0] - out.shape[0], axis=0)])
    if out.shape[1] < shape[1]:
        out = np.hstack([out, np.repeat(out[:, -1:], shape[1] - out.shape[1], axis=1)])
    return out[:shape[0], :shape[1]]


def _level_flow(f1, f2, u, v, cfg: FlowConfig):
    block = cfg.block
    gy, gx = f1.shape[0] // block, f1.shape[1] // block
    hh, ww = gy * block, gx * block
    f1c = f1[:hh, :ww]
    iy, ix = np.gradient(f1c)
    ybase, xbase = np.mgrid[0:hh, 0:ww].astype(np.float64)

    def block_sum(a):
        return a.reshape(gy, block, gx, block).sum(axis=(1, 3))

    # 2x2 structure tensor per block; regularized so flat blocks solve to zero
    sxx = block_sum(ix * ix) + cfg.regularization
    syy = block_sum(iy * iy) + cfg.regularization
    sxy = block_sum(ix * iy)
    det = sxx * syy - sxy * sxy
    for _ in range(cfg.iterations):
        upix = np.repeat(np.repeat(u, block, axis=0), block, axis=1)
        vpix = np.repeat(np.repeat(v, block, axis=0), block, axis=1)
        warped = map_coordinates(f2, [ybase + vpix, xbase + upix], order=1, mode="nearest")
        dt = warped - f1c
        b1 = block_sum(ix * dt)
        b2 = block_sum(iy * dt)
        u = u - (syy * b1 - sxy * b2) / det
        v = v - (sxx * b2 - sxy * b1) / det
    return u, v


def _pair_flow(f1: np.ndarray, f2: np.ndarray, cfg: FlowConfig):
    pyr1, pyr2 = [f1], [f2]
    for _ in range(cfg.levels - 1):
        if min(pyr1[-1].shape) < 2 * cfg.block:
            break
        pyr1.append(_downsample2(pyr1[-1]))
        pyr2.append(_downsample2(pyr2[-1]))
    u = v = None
    for a, b in zip(reversed(pyr1), reversed(pyr2)):
        grid = (a.shape[0] // cfg.block, a.shape[1] // cfg.block)
        if u is None:
            u = np.zeros(grid)
            v = np.zeros(grid)
        else:
            u = 2.0 * _resize_grid(u, grid)
            v = 2.0 * _resize_grid(v, grid)
        u, v = _level_flow(a, b, u, v, cfg)
    return u, v


def flow_magnitude(frames: FrameSequence, cfg: FlowConfig = FlowConfig()) -> MotionSeries:
    """Mean block-flow magnitude for every consecutive frame pair.

    Degenerate pairs (flat images, full-field flips) regularize to zero flow
    rather than erroring. Frames smaller than one block at the coarsest
    pyramid level shrink the pyramid accordingly.
    """
    if frames.frames.shape[1] < cfg.block or frames.frames.shape[2] < cfg.block:
        raise ValueError(f"frames must be at least {cfg.block}x{cfg.block} pixels")
    mags = np.empty(len(frames) - 1)
    for i in range(len(frames) - 1):
        u, v = _pair_flow(frames.frames[i], frames.frames[i + 1], cfg)
        mags[i] = float(np.mean(np.hypot(u, v)))
    return MotionSeries(mags, frames.fps)


def motion_peaks(series: MotionSeries, min_height: float = 0.1, window: int = 2) -> PeakSet:
    """Strict local maxima of the motion series that reach `min_height`.

    Index i is a peak iff magnitudes[i] strictly exceeds every other value in
    [i - window, i + window] (truncated at the ends) and magnitudes[i] >=
    min_height. Peak time is (i + 0.5) / fps, the midpoint of the frame pair.
    The height floor is what keeps static scenes (tiny flow jitter) from
    producing peaks.
    """
    if min_height < 0.0:
        raise ValueError("min_height must be >= 0")
    if window < 1:
        raise ValueError("window must be >= 1")
    m = series.magnitudes
    n = m.size
    times = []
    for i in range(n):
        if m[i] < min_height:
            continue
        lo, hi = max(0, i - window), min(n, i + window + 1)
        neighborhood = np.concatenate([m[lo:i], m[i + 1:hi]])
        if neighborhood.size and m[i] <= neighborhood.max():
            continue
        times.append((i + 0.5) / series.fps)
    return PeakSet(np.asarray(times, dtype=np.float64), series.duration)


def write_motion_csv(series: MotionSeries, path: str | os.PathLike) -> None:
    """Write `frame,seconds,magnitude` rows, LF-terminated, 6 decimals."""
    with open(path, "w", newline="\n") as fh:
        fh.write("frame,seconds,magnitude\n")
        for i, v in enumerate(series.magnitudes):
            fh.write(f"{i},{(i + 0.5) / series.fps:.6f},{v:.6f}\n")
