import numpy as np
import pytest

from avalign.video import (
    FlowConfig,
    FrameSequence,
    MotionSeries,
    VideoFormatError,
    flow_magnitude,
    load_frames,
    motion_peaks,
    write_motion_csv,
)

from helpers import shifting_frames, textured_image, write_frames_dir, write_pgm


# --------------------------------------------------------------- load_frames

def test_minimal_pgm_directory(tmp_path):
    img = np.full((8, 8), 0.5)
    write_frames_dir(tmp_path / "clip", [img, img])
    seq = load_frames(tmp_path / "clip", fps=10.0)
    assert len(seq) == 2
    assert seq.frames.shape == (2, 8, 8)
    assert np.allclose(seq.frames, 0.5, atol=1 / 255)


def test_mismatched_dimensions(tmp_path):
    d = tmp_path / "clip"
    d.mkdir()
    write_pgm(d / "a.pgm", np.zeros((8, 8)))
    write_pgm(d / "b.pgm", np.zeros((8, 10)))
    with pytest.raises(VideoFormatError, match="inconsistent dimensions"):
        load_frames(d, fps=10.0)


def test_duration_property(tmp_path):
    img = textured_image((16, 16), seed=0)
    write_frames_dir(tmp_path / "clip", [img] * 25)
    seq = load_frames(tmp_path / "clip", fps=25.0)
    assert seq.duration == pytest.approx(1.0)


def test_fewer_than_two_frames(tmp_path):
    d = tmp_path / "clip"
    d.mkdir()
    write_pgm(d / "only.pgm", np.zeros((8, 8)))
    with pytest.raises(VideoFormatError, match="fewer than 2"):
        load_frames(d, fps=10.0)


def test_unreadable_image(tmp_path):
    d = tmp_path / "clip"
    d.mkdir()
    (d / "a.pgm").write_bytes(b"P6 junk")
    (d / "b.pgm").write_bytes(b"P6 junk")
    with pytest.raises(VideoFormatError, match="unreadable image"):
        load_frames(d, fps=10.0)


def test_raw_luma_stream(tmp_path):
    frames = (np.arange(3 * 6 * 4) % 256).astype(np.uint8).reshape(3, 4, 6)
    raw = tmp_path / "clip.y"
    raw.write_bytes(frames.tobytes())
    (tmp_path / "clip.y.dims").write_text("6 4\n")
    seq = load_frames(raw, fps=5.0)
    assert seq.frames.shape == (3, 4, 6)
    assert np.allclose(seq.frames, frames / 255.0)


def test_raw_luma_missing_sidecar(tmp_path):
    raw = tmp_path / "clip.y"
    raw.write_bytes(bytes(64))
    with pytest.raises(VideoFormatError, match="sidecar"):
        load_frames(raw, fps=5.0)


def test_frame_sequence_invariants():
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((1, 8, 8)), fps=10.0)
    with pytest.raises(ValueError):
        FrameSequence(np.full((2, 8, 8), 1.5), fps=10.0)
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((2, 8, 8)), fps=0.0)


# ------------------------------------------------------------ flow_magnitude

def test_static_sequence_zero_motion():
    img = textured_image((32, 48), seed=1)
    series = flow_magnitude(FrameSequence(np.stack([img, img, img]), 10.0))
    assert np.all(series.magnitudes == 0.0)


def test_two_pixel_shift_oracle():
    # known displacement on periodic texture: mean magnitude must recover it
    n = 64
    xx, yy = np.meshgrid(np.arange(n), np.arange(n))
    tex = 0.5 + 0.2 * np.sin(2 * np.pi * xx / 16) + 0.2 * np.sin(2 * np.pi * yy / 16)
    seq = FrameSequence(np.stack([tex, np.roll(tex, 2, axis=1)]), 10.0)
    series = flow_magnitude(seq)
    assert abs(series.magnitudes[0] - 2.0) <= 0.25


def test_full_field_flip_is_finite():
    seq = FrameSequence(np.stack([np.zeros((32, 32)), np.ones((32, 32))]), 10.0)
    series = flow_magnitude(seq)
    assert np.all(np.isfinite(series.magnitudes))


def test_additive_offset_invariance():
    base = textured_image((40, 40), seed=2, lo=0.2, hi=0.6)
    moved = np.roll(base, 1, axis=0)
    plain = flow_magnitude(FrameSequence(np.stack([base, moved]), 10.0))
    offset = flow_magnitude(
        FrameSequence(np.stack([base + 0.3, moved + 0.3]), 10.0)
    )
    assert np.allclose(plain.magnitudes, offset.magnitudes, atol=1e-12)


def test_small_frames_shrink_pyramid():
    img = textured_image((8, 8), seed=3)
    series = flow_magnitude(FrameSequence(np.stack([img, img]), 10.0))
    assert series.magnitudes[0] == 0.0
    with pytest.raises(ValueError):
        flow_magnitude(FrameSequence(np.zeros((2, 4, 4)), 10.0))


def test_motion_series_length():
    img = textured_image((16, 16), seed=4)
    seq = FrameSequence(np.stack([img] * 7), 10.0)
    assert len(flow_magnitude(seq)) == 6


# -------------------------------------------------------------- motion_peaks

def test_all_zero_series_no_peaks():
    # the static-scene fix: tiny or zero flow must never produce peaks
    series = MotionSeries(np.zeros(20), 10.0)
    assert len(motion_peaks(series)) == 0


def test_below_threshold_maximum_rejected():
    series = MotionSeries(np.array([0.05, 0.09, 0.05]), 10.0)
    assert len(motion_peaks(series, min_height=0.1, window=1)) == 0


def test_hand_scanned_peaks():
    series = MotionSeries(np.array([0.0, 0.5, 0.0, 0.3, 0.0]), 10.0)
    peaks = motion_peaks(series, min_height=0.1, window=1)
    assert np.allclose(peaks.times, [0.15, 0.35])


def test_constant_series_no_peaks():
    series = MotionSeries(np.full(15, 0.7), 10.0)
    assert len(motion_peaks(series, min_height=0.1, window=2)) == 0


def test_threshold_monotonicity():
    rng = np.random.default_rng(17)
    for _ in range(20):
        series = MotionSeries(rng.uniform(0.0, 1.0, size=rng.integers(3, 60)), 25.0)
        low = set(motion_peaks(series, min_height=0.05).times)
        high = set(motion_peaks(series, min_height=0.3).times)
        assert high <= low


def test_peak_times_within_duration():
    series = MotionSeries(np.array([0.0, 0.9, 0.0]), 10.0)
    peaks = motion_peaks(series, min_height=0.1, window=1)
    assert np.all(peaks.times < peaks.duration)
    assert peaks.duration == pytest.approx(0.4)


def test_motion_csv_format(tmp_path):
    series = MotionSeries(np.array([0.0, 1.25]), 10.0)
    path = tmp_path / "motion.csv"
    write_motion_csv(series, path)
    assert path.read_text() == (
        "frame,seconds,magnitude\n0,0.050000,0.000000\n1,0.150000,1.250000\n"
    )
