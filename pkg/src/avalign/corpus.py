"""Batch corpus scoring, threshold filtering, and score statistics.

A manifest is JSON Lines, one clip per line:

    {"id": "...", "audio": "clip.wav", "frames": "framesdir/", "fps": 25.0,
     "caption": "...", "ref_audio": "reference.wav"}

`caption` and `ref_audio` are optional. Scoring produces one record per
entry in manifest order regardless of worker count; per-clip failures
become failed records instead of aborting the run.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .align import av_align, aa_align
from .audio import OnsetConfig, PeakPickConfig, detect_peaks, load_wav
from .video import FlowConfig, flow_magnitude, load_frames, motion_peaks

HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    audio_path: str
    frames_path: str
    fps: float
    caption: str | None = None
    ref_audio_path: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("manifest entry id must be non-empty")
        if self.fps <= 0.0:
            raise ValueError(f"entry {self.id}: fps must be positive")


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    status: str
    av_align: float | None = None
    aa_align: float | None = None
    audio_peaks: int = 0
    motion_peaks: int = 0
    reason: str | None = None

    def __post_init__(self):
        if self.status == "ok":
            if self.av_align is None or not 0.0 <= self.av_align <= 1.0:
                raise ValueError(f"record {self.id}: av_align out of [0, 1]")
            if self.aa_align is not None and not 0.0 <= self.aa_align <= 1.0:
                raise ValueError(f"record {self.id}: aa_align out of [0, 1]")
        elif self.status == "failed":
            if not self.reason:
                raise ValueError(f"record {self.id}: failed records need a reason")
        else:
            raise ValueError(f"record {self.id}: status must be 'ok' or 'failed'")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class ScoringConfig:
    window_seconds: float = 0.1
    flow_min_height: float = 0.1
    flow_window: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.window_seconds <= 0.0:
            raise ValueError("window_seconds must be positive")
        if self.flow_min_height < 0.0:
            raise ValueError("flow_min_height must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class CorpusStats:
    """Moments and 20-bin histogram of the ok records' audio-video scores."""

    n: int
    mean: float
    stddev: float
    histogram: tuple[int, ...]
    zero_peak_fraction: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("stats need at least one ok record")
        if len(self.histogram) != HISTOGRAM_BINS or sum(self.histogram) != self.n:
            raise ValueError("histogram must have 20 bins summing to n")
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError("mean must lie in [0, 1]")
        if not 0.0 <= self.zero_peak_fraction <= 1.0:
            raise ValueError("zero_peak_fraction must lie in [0, 1]")


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    """Parse a JSONL manifest; duplicate or missing ids are fatal."""
    entries = []
    seen = set()
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"manifest line {lineno}: invalid JSON ({exc})") from None
            try:
                entry = ManifestEntry(
                    id=str(obj["id"]),
                    audio_path=str(obj["audio"]),
                    frames_path=str(obj["frames"]),
                    fps=float(obj["fps"]),
                    caption=obj.get("caption"),
                    ref_audio_path=obj.get("ref_audio"),
                )
            except KeyError as exc:
                raise ValueError(f"manifest line {lineno}: missing field {exc}") from None
            if entry.id in seen:
                raise ValueError(f"manifest line {lineno}: duplicate id {entry.id!r}")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def score_entry(entry: ManifestEntry, cfg: ScoringConfig = ScoringConfig()) -> ScoreRecord:
    """Score one clip; any per-stage error becomes a failed record."""
    try:
        audio_pk = detect_peaks(load_wav(entry.audio_path), OnsetConfig(), PeakPickConfig())
    except Exception as exc:
        return ScoreRecord(id=entry.id, status="failed", reason=f"audio: {exc}")
    try:
        frames = load_frames(entry.frames_path, entry.fps)
        motion = flow_magnitude(frames, FlowConfig())
        motion_pk = motion_peaks(motion, cfg.flow_min_height, cfg.flow_window)
    except Exception as exc:
        return ScoreRecord(id=entry.id, status="failed", reason=f"frames: {exc}")

    av = av_align(audio_pk, motion_pk, window=cfg.window_seconds)
    aa_value = None
    if entry.ref_audio_path is not None:
        try:
            ref_pk = detect_peaks(load_wav(entry.ref_audio_path), OnsetConfig(), PeakPickConfig())
        except Exception as exc:
            return ScoreRecord(id=entry.id, status="failed", reason=f"ref_audio: {exc}")
        aa_value = aa_align(ref_pk, audio_pk, window=cfg.window_seconds).value

    return ScoreRecord(
        id=entry.id,
        status="ok",
        av_align=av.value,
        aa_align=aa_value,
        audio_peaks=len(audio_pk),
        motion_peaks=len(motion_pk),
    )


def score_corpus(
    entries: list[ManifestEntry], cfg: ScoringConfig = ScoringConfig()
) -> list[ScoreRecord]:
    """Score every entry, preserving manifest order for any worker count."""
    if cfg.workers == 1 or len(entries) <= 1:
        return [score_entry(e, cfg) for e in entries]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(score_entry, entries, [cfg] * len(entries)))


def filter_corpus(
    records: list[ScoreRecord], threshold: float = 0.2
) -> tuple[list[str], list[str]]:
    """Partition record ids: keep ok records scoring >= threshold, drop the rest.

    Failed records always land in the dropped list.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    kept, dropped = [], []
    for rec in records:
        if rec.ok and rec.av_align >= threshold:
            kept.append(rec.id)
        else:
            dropped.append(rec.id)
    return kept, dropped


def corpus_stats(records: list[ScoreRecord]) -> CorpusStats:
    """Mean, population stddev, 20-bin histogram, and zero-peak mass of ok records.

    zero_peak_fraction counts ok records where either modality detected no
    peaks at all, the population whose scores pile up at zero.
    """
    ok = [r for r in records if r.ok]
    if not ok:
        raise ValueError("no ok records to summarize")
    scores = np.asarray([r.av_align for r in ok])
    hist = [0] * HISTOGRAM_BINS
    for v in scores:
        hist[min(HISTOGRAM_BINS - 1, int(v * HISTOGRAM_BINS))] += 1
    zero_peaks = sum(1 for r in ok if r.audio_peaks == 0 or r.motion_peaks == 0)
    return CorpusStats(
        n=len(ok),
        mean=float(scores.mean()),
        stddev=float(scores.std()),
        histogram=tuple(hist),
        zero_peak_fraction=zero_peaks / len(ok),
    )


def record_to_json(rec: ScoreRecord) -> str:
    """Fixed-format JSON line: 6-decimal scores, stable key order."""
    parts = [f'"id": {json.dumps(rec.id)}', f'"status": "{rec.status}"']
    if rec.ok:
        parts.append(f'"av_align": {rec.av_align:.6f}')
        if rec.aa_align is not None:
            parts.append(f'"aa_align": {rec.aa_align:.6f}')
        parts.append(f'"audio_peaks": {rec.audio_peaks}')
        parts.append(f'"motion_peaks": {rec.motion_peaks}')
    else:
        parts.append(f'"reason": {json.dumps(rec.reason)}')
    return "{" + ", ".join(parts) + "}"


def write_records_jsonl(records: list[ScoreRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="\n") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_records_jsonl(path: str | os.PathLike) -> list[ScoreRecord]:
    records = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    ScoreRecord(
                        id=str(obj["id"]),
                        status=str(obj["status"]),
                        av_align=obj.get("av_align"),
                        aa_align=obj.get("aa_align"),
                        audio_peaks=int(obj.get("audio_peaks", 0)),
                        motion_peaks=int(obj.get("motion_peaks", 0)),
                        reason=obj.get("reason"),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"records line {lineno}: {exc}") from None
    return records


def write_stats_csv(stats: CorpusStats, path: str | os.PathLike) -> None:
    """Two-column `stat,value` CSV: n, mean, stddev, zero_peak_fraction, then bins."""
    with open(path, "w", newline="\n") as fh:
        fh.write("stat,value\n")
        fh.write(f"n,{stats.n}\n")
        fh.write(f"mean,{stats.mean:.6f}\n")
        fh.write(f"stddev,{stats.stddev:.6f}\n")
        fh.write(f"zero_peak_fraction,{stats.zero_peak_fraction:.6f}\n")
        for i, count in enumerate(stats.histogram):
            lo = i / HISTOGRAM_BINS
            hi = (i + 1) / HISTOGRAM_BINS
            fh.write(f"bin_{lo:.2f}_{hi:.2f},{count}\n")
