"""Command-line interface.

Subcommands: onsets, aa-align, av-align, score, filter, selftest.
Exit codes: 0 ok, 1 I/O or decode failure, 2 per-clip failures present,
3 selftest failure, 64 usage, 65 data format.
"""

from __future__ import annotations

import argparse
import sys

from . import corpus as corpus_mod
from .align import MANY_TO_ONE, ONE_TO_ONE, av_align, aa_align
from .audio import (
    OnsetConfig,
    PeakPickConfig,
    WavFormatError,
    detect_peaks,
    load_wav,
    onset_envelope,
    onset_labels,
    pick_peaks,
    write_envelope_csv,
    write_labels_csv,
)
from .peaks import read_peaks_csv, write_peaks_csv
from .selftest import report_lines, run_selftest
from .video import (
    FlowConfig,
    VideoFormatError,
    flow_magnitude,
    load_frames,
    motion_peaks,
    write_motion_csv,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CLIP_FAILURES = 2
EXIT_SELFTEST = 3
EXIT_USAGE = 64
EXIT_DATA_FORMAT = 65


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _load_peaks(path):
    """A .csv input is a peaks file; anything else is decoded as WAV."""
    if str(path).lower().endswith(".csv"):
        return read_peaks_csv(path)
    return detect_peaks(load_wav(path))


def _score_text(score, fmt, extra=()):
    if fmt == "csv":
        head = "value,matched,union_size,window_seconds"
        row = f"{score.value:.6f},{score.matched},{score.union_size},{score.window_seconds:.6f}"
        for name, value in extra:
            head += f",{name}"
            row += f",{value}"
        return head + "\n" + row + "\n"
    body = score.to_json()
    if extra:
        fields = ", ".join(f'"{name}": {value}' for name, value in extra)
        body = body[:-1] + ", " + fields + "}"
    return body + "\n"


def _cmd_onsets(args):
    clip = load_wav(args.audio)
    env = onset_envelope(clip, OnsetConfig())
    peaks = pick_peaks(env, PeakPickConfig(), duration=clip.duration)
    if args.out_peaks:
        write_peaks_csv(peaks, args.out_peaks)
    if args.out_envelope:
        write_envelope_csv(env, args.out_envelope)
    if args.out_labels:
        t_prime = max(1, round(clip.duration * args.label_rate))
        labels = onset_labels(peaks, t_prime, args.label_rate)
        write_labels_csv(labels, args.out_labels)
    sys.stdout.write(f"{len(peaks)} peaks\n")
    return EXIT_OK


def _cmd_aa_align(args):
    gt = _load_peaks(args.ground_truth)
    gen = _load_peaks(args.generated)
    score = aa_align(gt, gen, window=args.window, mode=args.matching)
    _write_text(args.out, _score_text(score, args.format))
    return EXIT_OK


def _cmd_av_align(args):
    audio_pk = detect_peaks(load_wav(args.audio))
    frames = load_frames(args.frames, args.fps)
    motion = flow_magnitude(frames, FlowConfig())
    if args.out_motion:
        write_motion_csv(motion, args.out_motion)
    motion_pk = motion_peaks(motion, args.flow_threshold, args.flow_window)
    score = av_align(audio_pk, motion_pk, window=args.window, mode=args.matching)
    extra = (("audio_peaks", len(audio_pk)), ("motion_peaks", len(motion_pk)))
    _write_text(args.out, _score_text(score, args.format, extra))
    return EXIT_OK


def _cmd_score(args):
    entries = corpus_mod.read_manifest(args.manifest)
    cfg = corpus_mod.ScoringConfig(
        window_seconds=args.window,
        flow_min_height=args.flow_threshold,
        workers=args.workers,
    )
    records = corpus_mod.score_corpus(entries, cfg)
    if args.out:
        corpus_mod.write_records_jsonl(records, args.out)
    else:
        for rec in records:
            sys.stdout.write(corpus_mod.record_to_json(rec) + "\n")
    kept, dropped = corpus_mod.filter_corpus(records, args.threshold)
    sys.stderr.write(
        f"scored {len(records)} clips: {len(kept)} kept, {len(dropped)} dropped "
        f"at threshold {args.threshold:.6f}\n"
    )
    if args.stats:
        ok = [r for r in records if r.ok]
        if ok:
            corpus_mod.write_stats_csv(corpus_mod.corpus_stats(records), args.stats)
        else:
            sys.stderr.write("no ok records; stats not written\n")
    failures = sum(1 for r in records if not r.ok)
    if failures and not args.ignore_failures:
        return EXIT_CLIP_FAILURES
    return EXIT_OK


def _cmd_filter(args):
    records = corpus_mod.read_records_jsonl(args.records)
    kept, dropped = corpus_mod.filter_corpus(records, args.threshold)
    if args.kept or args.dropped:
        if args.kept:
            _write_text(args.kept, "".join(i + "\n" for i in kept))
        if args.dropped:
            _write_text(args.dropped, "".join(i + "\n" for i in dropped))
    else:
        for i in kept:
            sys.stdout.write(f"kept,{i}\n")
        for i in dropped:
            sys.stdout.write(f"dropped,{i}\n")
    return EXIT_OK


def _cmd_selftest(args):
    report = run_selftest(seed=args.seed, break_gradient=args.break_gradient)
    text = "".join(line + "\n" for line in report_lines(report))
    _write_text(args.out, text)
    if all(row["pass"] for row in report):
        return EXIT_OK
    return EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avalign", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("onsets",
                       help="detect audio onset peaks and emit peak/label CSVs")
    p.add_argument("audio", help="input WAV file")
    p.add_argument("--out-peaks", help="peaks CSV (index,seconds)")
    p.add_argument("--out-envelope", help="envelope CSV (frame,seconds,value)")
    p.add_argument("--out-labels", help="binary label CSV (frame,label)")
    p.add_argument("--label-rate", type=float, default=25.0,
                   help="label frames per second (default 25)")
    p.set_defaults(func=_cmd_onsets)

    p = sub.add_parser("aa-align",
                       help="alignment score between two audio files or peak CSVs")
    p.add_argument("ground_truth", help="reference WAV or peaks CSV")
    p.add_argument("generated", help="candidate WAV or peaks CSV")
    p.add_argument("--window", type=float, default=0.1,
                   help="match window in seconds (default 0.1)")
    p.add_argument("--matching", choices=[ONE_TO_ONE, MANY_TO_ONE], default=ONE_TO_ONE)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", help="write the score here instead of stdout")
    p.set_defaults(func=_cmd_aa_align)

    p = sub.add_parser("av-align",
                       help="alignment score between audio onsets and video motion peaks")
    p.add_argument("audio", help="input WAV file")
    p.add_argument("frames", help="PGM directory or raw .y luma stream")
    p.add_argument("--fps", type=float, default=25.0, help="video frame rate (default 25)")
    p.add_argument("--window", type=float, default=0.1,
                   help="match window in seconds (default 0.1)")
    p.add_argument("--flow-threshold", type=float, default=0.1,
                   help="minimum motion-peak height in pixels/frame (default 0.1)")
    p.add_argument("--flow-window", type=int, default=2,
                   help="local-max window in frames (default 2)")
    p.add_argument("--matching", choices=[ONE_TO_ONE, MANY_TO_ONE], default=ONE_TO_ONE)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", help="write the score here instead of stdout")
    p.add_argument("--out-motion", help="also write the motion series CSV here")
    p.set_defaults(func=_cmd_av_align)

    p = sub.add_parser("score",
                       help="batch-score a JSONL manifest of clips")
    p.add_argument("manifest", help="JSONL manifest path")
    p.add_argument("--out", help="records JSONL path (default stdout)")
    p.add_argument("--stats", help="also write a stats CSV here")
    p.add_argument("--threshold", type=float, default=0.2,
                   help="filter threshold reported in the summary (default 0.2)")
    p.add_argument("--window", type=float, default=0.1)
    p.add_argument("--flow-threshold", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--ignore-failures", action="store_true",
                   help="exit 0 even when some clips failed")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("filter",
                       help="partition a records JSONL at a score threshold")
    p.add_argument("records", help="records JSONL path")
    p.add_argument("--threshold", type=float, default=0.2,
                   help="keep av_align >= threshold (default 0.2)")
    p.add_argument("--kept", help="write kept ids here, one per line")
    p.add_argument("--dropped", help="write dropped ids here, one per line")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("selftest",
                       help="run all kernel checks and emit a JSONL report")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for the check harness")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--break-gradient", action="store_true",
                   help="inject a gradient fault (harness sanity check)")
    p.set_defaults(func=_cmd_selftest)
    return parser


def _validate(parser, args):
    window = getattr(args, "window", None)
    if window is not None and window <= 0.0:
        parser.error("--window must be positive")
    flow = getattr(args, "flow_threshold", None)
    if flow is not None and flow < 0.0:
        parser.error("--flow-threshold must be >= 0")
    threshold = getattr(args, "threshold", None)
    if threshold is not None and not 0.0 <= threshold <= 1.0:
        parser.error("--threshold must lie in [0, 1]")
    workers = getattr(args, "workers", None)
    if workers is not None and workers < 1:
        parser.error("--workers must be >= 1")
    label_rate = getattr(args, "label_rate", None)
    if label_rate is not None and label_rate <= 0.0:
        parser.error("--label-rate must be positive")
    fps = getattr(args, "fps", None)
    if fps is not None and fps <= 0.0:
        parser.error("--fps must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return args.func(args)
    except VideoFormatError as exc:
        sys.stderr.write(f"avalign: {exc}\n")
        return EXIT_DATA_FORMAT
    except (FileNotFoundError, WavFormatError, ValueError, OSError) as exc:
        sys.stderr.write(f"avalign: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
