import json

import numpy as np
import pytest

from avalign.audio import detect_peaks, load_wav
from avalign.corpus import (
    CorpusStats,
    ManifestEntry,
    ScoreRecord,
    ScoringConfig,
    corpus_stats,
    filter_corpus,
    read_manifest,
    read_records_jsonl,
    record_to_json,
    score_corpus,
    score_entry,
    write_records_jsonl,
)
from avalign.video import FlowConfig, flow_magnitude, load_frames, motion_peaks

from helpers import (
    click_signal,
    max_bipartite_matching,
    shifting_frames,
    textured_image,
    write_frames_dir,
    write_wav,
)


def make_clip(root, name, clicks, shift_after, fps=10.0, duration=2.5, n_frames=None,
              ref_clicks=None, seed=0):
    """One synthetic audio+frames clip; returns its manifest dict."""
    n_frames = n_frames or int(duration * fps)
    wav = root / f"{name}.wav"
    write_wav(wav, click_signal(duration, clicks), 16000)
    frames = shifting_frames(textured_image((40, 48), seed=seed), n_frames, shift_after)
    write_frames_dir(root / f"{name}_frames", frames)
    entry = {"id": name, "audio": str(wav), "frames": str(root / f"{name}_frames"),
             "fps": fps, "caption": f"clip {name}"}
    if ref_clicks is not None:
        ref = root / f"{name}_ref.wav"
        write_wav(ref, click_signal(duration, ref_clicks), 16000)
        entry["ref_audio"] = str(ref)
    return entry


def write_manifest(path, entries):
    with open(path, "w", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps(e) + "\n")
    return path


# ------------------------------------------------------------------- manifest

def test_manifest_roundtrip(tmp_path):
    entries = [
        {"id": "a", "audio": "a.wav", "frames": "a/", "fps": 25.0, "caption": "hi"},
        {"id": "b", "audio": "b.wav", "frames": "b/", "fps": 10.0, "ref_audio": "r.wav"},
    ]
    parsed = read_manifest(write_manifest(tmp_path / "m.jsonl", entries))
    assert [e.id for e in parsed] == ["a", "b"]
    assert parsed[0].caption == "hi"
    assert parsed[0].ref_audio_path is None
    assert parsed[1].ref_audio_path == "r.wav"


def test_manifest_duplicate_id(tmp_path):
    entries = [{"id": "a", "audio": "x", "frames": "y", "fps": 1.0}] * 2
    with pytest.raises(ValueError, match="duplicate id"):
        read_manifest(write_manifest(tmp_path / "m.jsonl", entries))


def test_manifest_missing_field(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"id": "a", "audio": "x", "fps": 1.0}\n')
    with pytest.raises(ValueError, match="missing field"):
        read_manifest(path)


def test_manifest_bad_json(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("{nope\n")
    with pytest.raises(ValueError, match="invalid JSON"):
        read_manifest(path)


# -------------------------------------------------------------- score_corpus

def test_empty_manifest_scores_empty():
    assert score_corpus([]) == []


def test_missing_audio_becomes_failed_record(tmp_path):
    frames = shifting_frames(textured_image((24, 24), seed=1), 5, ())
    write_frames_dir(tmp_path / "f", frames)
    entry = ManifestEntry("x", str(tmp_path / "gone.wav"), str(tmp_path / "f"), 10.0)
    rec = score_entry(entry)
    assert rec.status == "failed"
    assert rec.reason.startswith("audio: missing file")


def test_missing_frames_becomes_failed_record(tmp_path):
    wav = tmp_path / "a.wav"
    write_wav(wav, click_signal(1.0, [0.5]), 16000)
    entry = ManifestEntry("x", str(wav), str(tmp_path / "gone"), 10.0)
    rec = score_entry(entry)
    assert rec.status == "failed"
    assert rec.reason.startswith("frames:")


def test_three_clip_corpus_matches_hand_matched_iou(tmp_path):
    specs = [
        ("c0", [0.45, 1.25], (3, 11), 1),   # both events near the motion bursts
        ("c1", [0.45], (3, 11, 18), 2),     # audio misses two motion events
        ("c2", [2.0], (3,), 3),             # audio far from the single motion event
    ]
    entries = []
    for name, clicks, shifts, seed in specs:
        entries.append(make_clip(tmp_path, name, clicks, shifts, seed=seed))
    manifest = [read_manifest(write_manifest(tmp_path / "m.jsonl", entries))]
    records = score_corpus(manifest[0])
    cfg = ScoringConfig()
    for rec, entry in zip(records, manifest[0]):
        assert rec.status == "ok"
        audio_pk = detect_peaks(load_wav(entry.audio_path))
        motion = flow_magnitude(load_frames(entry.frames_path, entry.fps), FlowConfig())
        motion_pk = motion_peaks(motion, cfg.flow_min_height, cfg.flow_window)
        matched = max_bipartite_matching(audio_pk.times, motion_pk.times, cfg.window_seconds)
        union = len(audio_pk) + len(motion_pk) - matched
        want = matched / union if union else 1.0
        assert rec.av_align == pytest.approx(want, abs=1e-12)
        assert rec.audio_peaks == len(audio_pk)
        assert rec.motion_peaks == len(motion_pk)


def test_reference_audio_adds_aa_score(tmp_path):
    entry_dict = make_clip(tmp_path, "r0", [0.5, 1.5], (4,), ref_clicks=[0.5, 1.5], seed=4)
    [entry] = read_manifest(write_manifest(tmp_path / "m.jsonl", [entry_dict]))
    rec = score_entry(entry)
    assert rec.status == "ok"
    assert rec.aa_align == pytest.approx(1.0)


def test_no_reference_audio_leaves_aa_absent(tmp_path):
    entry_dict = make_clip(tmp_path, "r1", [0.5], (4,), seed=5)
    [entry] = read_manifest(write_manifest(tmp_path / "m.jsonl", [entry_dict]))
    assert score_entry(entry).aa_align is None


def test_worker_counts_agree(tmp_path):
    entries = []
    for i in range(4):
        entries.append(make_clip(tmp_path, f"w{i}", [0.3 + 0.2 * i], (2 + i,), seed=i))
    manifest = read_manifest(write_manifest(tmp_path / "m.jsonl", entries))
    solo = score_corpus(manifest, ScoringConfig(workers=1))
    duo = score_corpus(manifest, ScoringConfig(workers=2))
    assert [record_to_json(r) for r in solo] == [record_to_json(r) for r in duo]
    assert [r.id for r in solo] == [e.id for e in manifest]


# -------------------------------------------------------------- filter_corpus

def _ok(i, score, audio_peaks=3, motion_peaks=3):
    return ScoreRecord(id=f"r{i}", status="ok", av_align=score,
                       audio_peaks=audio_peaks, motion_peaks=motion_peaks)


def test_filter_boundary_semantics():
    records = [_ok(0, 0.0), _ok(1, 0.19), _ok(2, 0.20), _ok(3, 0.95)]
    kept, dropped = filter_corpus(records, 0.2)
    assert kept == ["r2", "r3"]
    assert dropped == ["r0", "r1"]


def test_filter_zero_threshold_keeps_all_ok():
    records = [_ok(i, s) for i, s in enumerate([0.0, 0.5, 1.0])]
    kept, dropped = filter_corpus(records, 0.0)
    assert len(kept) == 3 and not dropped


def test_filter_drops_failed_records():
    records = [ScoreRecord(id="f0", status="failed", reason="audio: missing file")]
    kept, dropped = filter_corpus(records, 0.2)
    assert kept == [] and dropped == ["f0"]


def test_filter_partitions_and_is_monotone():
    rng = np.random.default_rng(41)
    records = [_ok(i, float(rng.uniform())) for i in range(50)]
    records.append(ScoreRecord(id="bad", status="failed", reason="frames: unreadable"))
    prev_kept = None
    for threshold in (0.0, 0.2, 0.5, 0.9, 1.0):
        kept, dropped = filter_corpus(records, threshold)
        assert len(kept) + len(dropped) == len(records)
        assert set(kept).isdisjoint(dropped)
        if prev_kept is not None:
            assert set(kept) <= prev_kept
        prev_kept = set(kept)


# --------------------------------------------------------------- corpus_stats

def test_stats_singleton():
    stats = corpus_stats([_ok(0, 0.5)])
    assert stats.n == 1
    assert stats.mean == 0.5
    assert stats.stddev == 0.0
    assert stats.histogram[10] == 1 and sum(stats.histogram) == 1


def test_stats_zero_peak_fraction():
    records = [_ok(0, 0.0, motion_peaks=0), _ok(1, 0.4)]
    stats = corpus_stats(records)
    assert stats.zero_peak_fraction == 0.5
    assert stats.mean == pytest.approx(0.2)


def test_stats_match_seeded_generator():
    rng = np.random.default_rng(77)
    true_mean, true_std, n = 0.2, 0.08, 1000
    scores = np.clip(rng.normal(true_mean, true_std, size=n), 0.0, 1.0)
    records = [_ok(i, float(s)) for i, s in enumerate(scores)]
    stats = corpus_stats(records)
    se_mean = true_std / np.sqrt(n)
    assert abs(stats.mean - true_mean) <= 3 * se_mean
    assert abs(stats.stddev - true_std) <= 3 * true_std / np.sqrt(2 * n)
    assert sum(stats.histogram) == n


def test_stats_require_ok_records():
    with pytest.raises(ValueError, match="no ok records"):
        corpus_stats([ScoreRecord(id="f", status="failed", reason="x")])


def test_stats_histogram_sums():
    rng = np.random.default_rng(51)
    records = [_ok(i, float(rng.uniform())) for i in range(137)]
    assert sum(corpus_stats(records).histogram) == 137


# ----------------------------------------------------------------- record I/O

def test_record_json_fixed_format():
    rec = _ok(0, 1 / 3)
    assert record_to_json(rec) == (
        '{"id": "r0", "status": "ok", "av_align": 0.333333, '
        '"audio_peaks": 3, "motion_peaks": 3}'
    )
    failed = ScoreRecord(id="x", status="failed", reason='audio: missing file: "q".wav')
    assert json.loads(record_to_json(failed))["reason"] == 'audio: missing file: "q".wav'


def test_records_jsonl_roundtrip(tmp_path):
    records = [
        _ok(0, 0.25),
        ScoreRecord(id="a", status="ok", av_align=0.5, aa_align=0.75,
                    audio_peaks=2, motion_peaks=4),
        ScoreRecord(id="b", status="failed", reason="frames: fewer than 2 frames"),
    ]
    path = tmp_path / "records.jsonl"
    write_records_jsonl(records, path)
    back = read_records_jsonl(path)
    assert [r.id for r in back] == ["r0", "a", "b"]
    assert back[1].aa_align == 0.75
    assert back[2].status == "failed"


def test_score_record_validation():
    with pytest.raises(ValueError):
        ScoreRecord(id="x", status="ok", av_align=1.5)
    with pytest.raises(ValueError):
        ScoreRecord(id="x", status="failed")
    with pytest.raises(ValueError):
        ScoreRecord(id="x", status="weird")
