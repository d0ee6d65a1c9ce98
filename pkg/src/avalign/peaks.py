"""Event peak sets: sorted onset/motion times in seconds, with CSV I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PeakSet:
    """Strictly increasing event times (seconds) within a clip of `duration` seconds."""

    times: np.ndarray
    duration: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        if times.ndim != 1:
            raise ValueError("peak times must be a 1-D sequence")
        if not np.all(np.isfinite(times)):
            raise ValueError("peak times must be finite")
        if times.size:
            if times[0] < 0.0:
                raise ValueError("peak times must be >= 0")
            if np.any(np.diff(times) <= 0.0):
                raise ValueError("peak times must be strictly increasing")
            if times[-1] >= self.duration:
                raise ValueError(
                    f"peak time {times[-1]:.6f} not below clip duration {self.duration:.6f}"
                )
        if self.duration < 0.0 or not np.isfinite(self.duration):
            raise ValueError("duration must be finite and >= 0")

    def __len__(self) -> int:
        return int(self.times.size)

    def shifted(self, offset: float) -> "PeakSet":
        """Same events delayed by `offset` seconds (offset must keep times >= 0)."""
        return PeakSet(self.times + offset, self.duration + offset)


def write_peaks_csv(peaks: PeakSet, path: str | os.PathLike) -> None:
    """Write `index,seconds` rows, one per peak, LF-terminated, 6 decimals."""
    with open(path, "w", newline="\n") as fh:
        fh.write("index,seconds\n")
        for i, t in enumerate(peaks.times):
            fh.write(f"{i},{t:.6f}\n")


def read_peaks_csv(path: str | os.PathLike, duration: float | None = None) -> PeakSet:
    """Read a peaks CSV written by :func:`write_peaks_csv`.

    The CSV carries no clip duration; when `duration` is None it defaults to
    the last peak time plus one millisecond (0.0 for an empty set). Metric
    computations never consult the duration, only label bucketing does.
    """
    times = []
    with open(path, "r") as fh:
        header = fh.readline()
        if header.strip() != "index,seconds":
            raise ValueError(f"unrecognized peaks CSV header: {header.strip()!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _, seconds = line.split(",")
            times.append(float(seconds))
    if duration is None:
        duration = times[-1] + 1e-3 if times else 0.0
    return PeakSet(np.asarray(times, dtype=np.float64), duration)
