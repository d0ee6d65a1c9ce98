"""Onset/motion peak alignment metrics and conditioning kernels.

The package detects acoustic onsets (log-mel spectral flux) and video motion
peaks (block-grid optical flow), scores their temporal agreement with a
windowed union-normalized match, and ships the deterministic math kernels a
conditioned latent-diffusion trainer relies on, plus a corpus scoring and
filtering pipeline behind the `avalign` CLI.
"""

from .align import AlignmentScore, MANY_TO_ONE, ONE_TO_ONE, aa_align, av_align, match_peaks
from .audio import (
    AudioClip,
    MelSpectrogram,
    OnsetConfig,
    OnsetEnvelope,
    OnsetLabels,
    PeakPickConfig,
    WavFormatError,
    detect_peaks,
    load_wav,
    mel_spectrogram,
    onset_envelope,
    onset_labels,
    pick_peaks,
    resample,
)
from .corpus import (
    CorpusStats,
    ManifestEntry,
    ScoreRecord,
    ScoringConfig,
    corpus_stats,
    filter_corpus,
    read_manifest,
    score_corpus,
    score_entry,
)
from .kernels import (
    AttentivePoolParams,
    NoiseSchedule,
    attentive_pool,
    attentive_pool_grad,
    cfg_combine,
    concat_condition,
    diffusion_loss,
    expand_context,
    forward_noise,
    onset_bce,
    project_global,
)
from .peaks import PeakSet, read_peaks_csv, write_peaks_csv
from .selftest import run_selftest
from .video import (
    FlowConfig,
    FrameSequence,
    MotionSeries,
    VideoFormatError,
    flow_magnitude,
    load_frames,
    motion_peaks,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentScore",
    "AttentivePoolParams",
    "AudioClip",
    "CorpusStats",
    "FlowConfig",
    "FrameSequence",
    "ManifestEntry",
    "MANY_TO_ONE",
    "MelSpectrogram",
    "MotionSeries",
    "NoiseSchedule",
    "ONE_TO_ONE",
    "OnsetConfig",
    "OnsetEnvelope",
    "OnsetLabels",
    "PeakPickConfig",
    "PeakSet",
    "ScoreRecord",
    "ScoringConfig",
    "VideoFormatError",
    "WavFormatError",
    "aa_align",
    "attentive_pool",
    "attentive_pool_grad",
    "av_align",
    "cfg_combine",
    "concat_condition",
    "corpus_stats",
    "detect_peaks",
    "diffusion_loss",
    "expand_context",
    "filter_corpus",
    "flow_magnitude",
    "forward_noise",
    "load_frames",
    "load_wav",
    "match_peaks",
    "mel_spectrogram",
    "motion_peaks",
    "onset_bce",
    "onset_envelope",
    "onset_labels",
    "pick_peaks",
    "project_global",
    "read_manifest",
    "read_peaks_csv",
    "resample",
    "run_selftest",
    "score_corpus",
    "score_entry",
    "write_peaks_csv",
]
