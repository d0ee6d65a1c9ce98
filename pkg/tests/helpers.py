"""Shared fixture builders and test-side oracles."""

import os

import numpy as np
from scipy.io import wavfile
from scipy.ndimage import gaussian_filter


def write_wav(path, samples, sample_rate, encoding="int16"):
    """Write a WAV via scipy (independent of the package's own reader)."""
    samples = np.asarray(samples)
    if encoding == "int16":
        wavfile.write(path, sample_rate, np.round(samples * 32767.0).astype(np.int16))
    elif encoding == "float32":
        wavfile.write(path, sample_rate, samples.astype(np.float32))
    else:
        raise ValueError(encoding)


def click_signal(duration, clicks, sample_rate=16000, amp=0.9):
    """Short broadband bursts at the given times over a silent background."""
    x = np.zeros(int(round(duration * sample_rate)))
    for c in clicks:
        s = int(round(c * sample_rate))
        x[s] = amp
        if s + 2 < x.size:
            x[s + 1] = -0.8 * amp
            x[s + 2] = 0.6 * amp
    return x


def write_pgm(path, image01, maxval=255):
    arr = np.clip(np.round(np.asarray(image01) * maxval), 0, maxval).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (arr.shape[1], arr.shape[0], maxval))
        fh.write(arr.tobytes())


def textured_image(shape, seed, lo=0.15, hi=0.85):
    rng = np.random.default_rng(seed)
    img = gaussian_filter(rng.random(shape), 2.0)
    img = (img - img.min()) / (img.max() - img.min())
    return lo + (hi - lo) * img


def shifting_frames(base, n_frames, shift_after=(), shift=3):
    """Static copies of `base`, translated by `shift` px after the listed indices."""
    frames = []
    cur = np.asarray(base).copy()
    for i in range(n_frames):
        frames.append(cur.copy())
        if i in shift_after:
            cur = np.roll(cur, shift, axis=1)
    return np.stack(frames)


def write_frames_dir(dirpath, frames):
    os.makedirs(dirpath, exist_ok=True)
    for i, frame in enumerate(frames):
        write_pgm(os.path.join(dirpath, f"f{i:04d}.pgm"), frame)
    return dirpath


def max_bipartite_matching(a_times, b_times, window):
    """Exhaustive maximum matching via augmenting paths (Kuhn's algorithm).

    Independent oracle for the greedy matcher: builds the full interval
    adjacency and searches augmenting paths, so it is exact for any input.
    """
    adj = [
        [j for j, tb in enumerate(b_times) if abs(ta - tb) <= window]
        for ta in a_times
    ]
    owner = {}

    def augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in owner or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    count = 0
    for i in range(len(a_times)):
        if augment(i, set()):
            count += 1
    return count


def random_peak_times(rng, max_peaks=8, duration=10.0, min_gap=1e-3):
    n = int(rng.integers(0, max_peaks + 1))
    times = np.sort(rng.uniform(0.0, duration - 1e-6, size=n))
    while times.size > 1 and np.min(np.diff(times)) <= min_gap:
        times = np.sort(rng.uniform(0.0, duration - 1e-6, size=n))
    return times
