"""Windowed peak-set alignment scores.

Two peak sets are compared by matching peaks that fall within +-window
seconds of each other and normalizing the match count by the size of the
union, giving an intersection-over-union style score in [0, 1]. The same
formula serves audio-vs-audio comparison (generated against ground truth)
and audio-vs-video comparison (audio onsets against motion peaks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .peaks import PeakSet

ONE_TO_ONE = "one-to-one"
MANY_TO_ONE = "many-to-one"


@dataclass(frozen=True)
class AlignmentScore:
    """Match count, union size, and their ratio for one peak-set comparison."""

    value: float
    matched: int
    union_size: int
    window_seconds: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0.0:
            raise ValueError("value must be finite and >= 0")
        if self.matched < 0 or self.union_size < 0:
            raise ValueError("counts must be >= 0")
        if self.window_seconds <= 0.0:
            raise ValueError("window_seconds must be positive")

    def to_json(self) -> str:
        return (
            f'{{"value": {self.value:.6f}, "matched": {self.matched}, '
            f'"union_size": {self.union_size}, "window_seconds": {self.window_seconds:.6f}}}'
        )


def match_peaks(a: PeakSet, b: PeakSet, window: float, mode: str = ONE_TO_ONE) -> int:
    """Count peaks of `a` that land within +-window seconds of a peak of `b`.

    In the default one-to-one mode each peak of `a` consumes the earliest
    still-unmatched peak of `b` within the window; because match intervals
    are sorted, this greedy scan returns the maximum bipartite matching and
    is symmetric in its arguments. The many-to-one mode counts every peak of
    `a` with at least one `b` peak in range without consuming it, which can
    overcount clustered peaks (the behavior the one-to-one rule corrects).
    """
    if window <= 0.0:
        raise ValueError("window must be positive")
    ta, tb = a.times, b.times
    if mode == MANY_TO_ONE:
        return int(sum(1 for t in ta if tb.size and np.min(np.abs(tb - t)) <= window))
    if mode != ONE_TO_ONE:
        raise ValueError(f"unknown matching mode: {mode!r}")
    i = j = matched = 0
    while i < ta.size and j < tb.size:
        if abs(ta[i] - tb[j]) <= window:
            matched += 1
            i += 1
            j += 1
        elif ta[i] < tb[j]:
            i += 1
        else:
            j += 1
    return matched


def aa_align(
    gt: PeakSet,
    gen: PeakSet,
    window: float = 0.1,
    mode: str = ONE_TO_ONE,
    both_empty: float = 1.0,
) -> AlignmentScore:
    """Audio-audio alignment: matched / (|gt| + |gen| - matched).

    Peaks match when they fall within +-window seconds of each other
    (window defaults to 0.1 s). Two empty sets score `both_empty` (two
    silent-but-identical clips are treated as aligned); one empty set
    against a non-empty one scores 0. The score is 1.0 exactly when the
    sets coincide.
    """
    matched = match_peaks(gen, gt, window, mode=mode)
    union = len(gt) + len(gen) - matched
    if union == 0:
        return AlignmentScore(both_empty, 0, 0, window)
    return AlignmentScore(matched / union, matched, union, window)


def av_align(
    audio: PeakSet,
    motion: PeakSet,
    window: float = 0.1,
    mode: str = ONE_TO_ONE,
    both_empty: float = 1.0,
) -> AlignmentScore:
    """Audio-video alignment: the same union-normalized match score with
    motion peaks as the reference set and audio onsets as the candidate set.
    A static video (no motion peaks) scores 0 against any non-empty audio.
    """
    return aa_align(motion, audio, window=window, mode=mode, both_empty=both_empty)
