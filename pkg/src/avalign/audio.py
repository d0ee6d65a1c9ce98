"""Audio ingestion and onset analysis.

The detection chain is: WAV -> 16 kHz mono -> log-mel spectrogram ->
maximum-filtered spectral flux envelope -> picked peaks -> binary per-frame
onset labels. Everything downstream (alignment metrics, corpus scoring)
consumes the resulting :class:`~avalign.peaks.PeakSet`.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import resample_poly

from .peaks import PeakSet

MIN_SAMPLE_RATE = 8000


class WavFormatError(ValueError):
    """Raised for malformed WAV containers or unsupported sample encodings."""


@dataclass(frozen=True)
class AudioClip:
    """Mono audio samples in [-1, 1] at an integer sample rate >= 8 kHz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if float(np.max(np.abs(samples))) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(f"sample_rate must be an integer >= {MIN_SAMPLE_RATE}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _read_fmt_chunk(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise WavFormatError("malformed header: fmt chunk shorter than 16 bytes")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
    if audio_format == 0xFFFE:
        # WAVE_FORMAT_EXTENSIBLE stores the real format code in the GUID prefix
        if len(body) < 26:
            raise WavFormatError("malformed header: extensible fmt chunk truncated")
        audio_format = struct.unpack("<H", body[24:26])[0]
    return audio_format, channels, sample_rate, bits


def load_wav(path: str | os.PathLike) -> AudioClip:
    """Load a RIFF/WAVE file as a mono clip scaled to [-1, 1].

    Accepts PCM 16-bit and IEEE float 32-bit, mono or stereo. Stereo is
    downmixed by channel averaging. Raises FileNotFoundError for a missing
    file and WavFormatError naming the offending field otherwise.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing file: {path}")
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("malformed header: not a RIFF/WAVE container")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack("<I", data[pos + 4:pos + 8])[0]
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"malformed header: chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = _read_fmt_chunk(body)
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word aligned

    if fmt is None:
        raise WavFormatError("malformed header: missing fmt chunk")
    if payload is None:
        raise WavFormatError("malformed header: missing data chunk")
    audio_format, channels, sample_rate, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"unsupported encoding: {channels} channels")
    if sample_rate < MIN_SAMPLE_RATE:
        raise WavFormatError(f"unsupported encoding: sample rate {sample_rate} below {MIN_SAMPLE_RATE}")

    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % 4], dtype="<f4")
        samples = np.clip(raw.astype(np.float64), -1.0, 1.0)
    else:
        raise WavFormatError(f"unsupported encoding: format code {audio_format}, {bits}-bit")

    if samples.size == 0:
        raise WavFormatError("malformed header: empty data chunk")
    if channels == 2:
        samples = samples[:samples.size - samples.size % 2].reshape(-1, 2).mean(axis=1)
    return AudioClip(samples, sample_rate)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to `target_rate` Hz.

    Output length is round(len * target / source); the input is returned
    unchanged when the rates already match. Filter ringing is clipped back
    into [-1, 1].
    """
    if target_rate < MIN_SAMPLE_RATE:
        raise ValueError(f"target_rate must be >= {MIN_SAMPLE_RATE}")
    if target_rate == clip.sample_rate:
        return clip
    g = np.gcd(int(target_rate), clip.sample_rate)
    out = resample_poly(clip.samples, int(target_rate) // g, clip.sample_rate // g)
    n_out = (len(clip) * int(target_rate) + clip.sample_rate // 2) // clip.sample_rate
    out = np.clip(out[:n_out], -1.0, 1.0)
    return AudioClip(out, int(target_rate))


@dataclass(frozen=True)
class OnsetConfig:
    """Mel/flux front-end parameters (defaults: 64 bands, 25 ms window, 10 ms hop at 16 kHz)."""

    sample_rate: int = 16000
    n_mels: int = 64
    win_length: int = 400
    hop_length: int = 160

    def __post_init__(self):
        if min(self.sample_rate, self.n_mels, self.win_length, self.hop_length) < 1:
            raise ValueError("onset config fields must be positive")

    @property
    def hop_seconds(self) -> float:
        return self.hop_length / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    """Non-negative mel power magnitudes, frames x bands."""

    values: np.ndarray
    hop_seconds: float
    bands: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[1] != self.bands:
            raise ValueError("values must be a frames x bands matrix")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("mel magnitudes must be finite and >= 0")
        if self.hop_seconds <= 0.0:
            raise ValueError("hop_seconds must be positive")


@dataclass(frozen=True)
class OnsetEnvelope:
    """Per-frame spectral-flux novelty; one frame shorter than its spectrogram."""

    values: np.ndarray
    hop_seconds: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("envelope must be 1-D")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("envelope values must be finite and >= 0")
        if self.hop_seconds <= 0.0:
            raise ValueError("hop_seconds must be positive")

    def __len__(self) -> int:
        return int(self.values.size)


def _mel_to_hz(m: np.ndarray) -> np.ndarray:
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def _hz_to_mel(f: float) -> float:
    return 2595.0 * np.log10(1.0 + f / 700.0)


@lru_cache(maxsize=8)
def _mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    n_bins = n_fft // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / n_fft
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for b in range(n_mels):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        fb[b] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_spectrogram(clip: AudioClip, cfg: OnsetConfig = OnsetConfig()) -> MelSpectrogram:
    """Centered Hann STFT power mapped onto triangular mel filters.

    The clip is resampled to cfg.sample_rate first. Frames are centered by
    zero-padding win_length/2 samples on both sides, so the frame count is
    1 + floor((n_padded - win_length) / hop_length) = 1 + floor(n / hop_length)
    for even window lengths, and frame f is centered on sample f * hop_length.
    """
    clip = resample(clip, cfg.sample_rate)
    pad = cfg.win_length // 2
    x = np.concatenate([np.zeros(pad), clip.samples, np.zeros(pad)])
    n_frames = 1 + (x.size - cfg.win_length) // cfg.hop_length
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.win_length)[::cfg.hop_length]
    frames = frames[:n_frames] * np.hanning(cfg.win_length)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    mel = power @ _mel_filterbank(cfg.sample_rate, cfg.win_length, cfg.n_mels).T
    return MelSpectrogram(mel, cfg.hop_seconds, cfg.n_mels)


def onset_envelope(clip: AudioClip, cfg: OnsetConfig = OnsetConfig()) -> OnsetEnvelope:
    """Maximum-filtered spectral flux of the log-mel spectrogram.

    envelope[t] = sum over bands of max(0, logmel[t + 1] - maxfilter(logmel[t]))
    where the maximum filter spans +-1 mel band and the first spectrogram
    frame is dropped (it has no predecessor). log uses log(1 + x) so silence
    maps to exactly zero.
    """
    mel = mel_spectrogram(clip, cfg)
    if mel.values.shape[0] < 2:
        raise ValueError("clip too short for one flux frame")
    logmel = np.log1p(mel.values)
    prev = logmel[:-1]
    widened = prev.copy()
    widened[:, :-1] = np.maximum(widened[:, :-1], prev[:, 1:])
    widened[:, 1:] = np.maximum(widened[:, 1:], prev[:, :-1])
    flux = np.maximum(0.0, logmel[1:] - widened).sum(axis=1)
    return OnsetEnvelope(flux, mel.hop_seconds)


@dataclass(frozen=True)
class PeakPickConfig:
    """Local-max / local-mean peak picking thresholds, in envelope frames.

    delta_mode "relative" scales delta by the global envelope maximum, which
    makes picking invariant to rescaling the envelope; "absolute" uses delta
    as-is.
    """

    pre_max: int = 3
    post_max: int = 3
    pre_avg: int = 10
    post_avg: int = 10
    delta: float = 0.05
    delta_mode: str = "relative"
    wait: int = 3

    def __post_init__(self):
        if min(self.pre_max, self.post_max, self.pre_avg, self.post_avg, self.wait) < 0:
            raise ValueError("window sizes must be >= 0")
        if self.delta < 0.0:
            raise ValueError("delta must be >= 0")
        if self.delta_mode not in ("relative", "absolute"):
            raise ValueError("delta_mode must be 'relative' or 'absolute'")


def pick_peaks(
    env: OnsetEnvelope,
    cfg: PeakPickConfig = PeakPickConfig(),
    duration: float | None = None,
) -> PeakSet:
    """Select envelope frames that are local maxima above the local mean.

    Frame t is a peak iff env[t] > 0, env[t] equals the maximum over
    [t - pre_max, t + post_max], env[t] >= mean(env[t - pre_avg .. t + post_avg])
    + delta, and t is at least `wait` frames after the previously accepted
    peak. Peak time is t * hop_seconds. The positivity requirement keeps
    silent (all-zero) envelopes peak-free under relative thresholding.
    """
    values = env.values
    n = values.size
    if n == 0:
        raise ValueError("envelope is empty")
    delta = cfg.delta * float(values.max()) if cfg.delta_mode == "relative" else cfg.delta
    picked = []
    last = None
    for t in range(n):
        v = values[t]
        if v <= 0.0:
            continue
        if v < values[max(0, t - cfg.pre_max):min(n, t + cfg.post_max + 1)].max():
            continue
        window = values[max(0, t - cfg.pre_avg):min(n, t + cfg.post_avg + 1)]
        if v < window.mean() + delta:
            continue
        if last is not None and t - last < cfg.wait:
            continue
        picked.append(t)
        last = t
    times = np.asarray(picked, dtype=np.float64) * env.hop_seconds
    if duration is None:
        duration = n * env.hop_seconds
    return PeakSet(times, duration)


def detect_peaks(
    clip: AudioClip,
    onset_cfg: OnsetConfig = OnsetConfig(),
    peak_cfg: PeakPickConfig = PeakPickConfig(),
) -> PeakSet:
    """Full chain: onset envelope then peak picking, with the clip's true duration."""
    env = onset_envelope(clip, onset_cfg)
    return pick_peaks(env, peak_cfg, duration=clip.duration)


@dataclass(frozen=True)
class OnsetLabels:
    """Binary per-frame onset indicators at `frame_rate` labels per second."""

    labels: np.ndarray
    frame_rate: float

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size < 1:
            raise ValueError("labels must be a non-empty 1-D sequence")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        if self.frame_rate <= 0.0:
            raise ValueError("frame_rate must be positive")

    def __len__(self) -> int:
        return int(self.labels.size)


def onset_labels(peaks: PeakSet, t_prime: int, frame_rate: float) -> OnsetLabels:
    """Bucket peak times into `t_prime` binary frames at `frame_rate` per second.

    label[i] = 1 iff some peak falls in [i / frame_rate, (i + 1) / frame_rate).
    The peak-set duration must agree with t_prime to within one frame; a peak
    landing in that final slack is clamped to the last bucket.
    """
    if t_prime < 1:
        raise ValueError("t_prime must be >= 1")
    if frame_rate <= 0.0:
        raise ValueError("frame_rate must be positive")
    if abs(peaks.duration * frame_rate - t_prime) > 1.0:
        raise ValueError(
            f"inconsistent duration: {peaks.duration:.6f} s at {frame_rate} labels/s "
            f"does not give {t_prime} frames"
        )
    labels = np.zeros(t_prime, dtype=np.int8)
    for t in peaks.times:
        labels[min(int(t * frame_rate), t_prime - 1)] = 1
    return OnsetLabels(labels, frame_rate)


def write_envelope_csv(env: OnsetEnvelope, path: str | os.PathLike) -> None:
    """Write `frame,seconds,value` rows, LF-terminated, 6 decimals."""
    with open(path, "w", newline="\n") as fh:
        fh.write("frame,seconds,value\n")
        for i, v in enumerate(env.values):
            fh.write(f"{i},{i * env.hop_seconds:.6f},{v:.6f}\n")


def write_labels_csv(labels: OnsetLabels, path: str | os.PathLike) -> None:
    """Write `frame,label` rows, LF-terminated."""
    with open(path, "w", newline="\n") as fh:
        fh.write("frame,label\n")
        for i, v in enumerate(labels.labels):
            fh.write(f"{i},{int(v)}\n")
