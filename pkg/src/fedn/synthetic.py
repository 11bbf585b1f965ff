"""Synthetic long "videos": per-frame feature sequences with planted expressions.

Each video is background Gaussian noise; each expression adds a scaled
category direction whose amplitude ramps up from onset to apex and back
down to offset.  The per-frame features stand in for the output of a
frozen face encoder.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FEATURE_MAGIC = b"TEDSFEAT"
_HEADER = struct.Struct("<8sII")


@dataclass(frozen=True)
class ExpressionEvent:
    onset: int
    offset: int
    apex: int
    category: int

    def __post_init__(self):
        if not self.onset < self.apex < self.offset:
            raise ValueError(f"need onset < apex < offset, got {self.onset}, {self.apex}, {self.offset}")


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    subject_id: str
    num_frames: int
    events: tuple[ExpressionEvent, ...] = ()

    def __post_init__(self):
        if self.num_frames <= 0:
            raise ValueError("num_frames must be positive")
        prev_end = None
        for ev in self.events:
            if ev.onset < 0 or ev.offset > self.num_frames:
                raise ValueError(f"event {ev} outside [0, {self.num_frames})")
            if prev_end is not None and ev.onset < prev_end:
                raise ValueError(f"events of {self.video_id} overlap or are unsorted")
            prev_end = ev.offset


@dataclass(frozen=True)
class FrameFeatureSequence:
    video_id: str
    features: np.ndarray  # (N, d) float32


@dataclass
class DatasetConfig:
    num_subjects: int = 10
    videos_per_subject: int = 2
    frames: tuple[int, int] = (600, 1200)
    events_per_video: tuple[int, int] = (2, 6)
    duration: tuple[int, int] = (30, 150)
    num_classes: int = 4
    category_weights: tuple[float, ...] = (116.0, 16.0, 105.0, 63.0)
    feature_dim: int = 64
    snr: float = 8.0
    min_gap: int = 10
    seed: int = 0

    def validate(self):
        w = np.asarray(self.category_weights, dtype=float)
        if len(w) != self.num_classes or (w < 0).any() or w.sum() <= 0:
            raise ValueError("category_weights needs num_classes nonnegative entries with positive sum")
        if self.duration[0] < 3 or self.duration[1] < self.duration[0]:
            raise ValueError(f"bad duration range {self.duration}")
        if self.frames[0] <= 0 or self.frames[1] < self.frames[0]:
            raise ValueError(f"bad frame range {self.frames}")
        if self.events_per_video[0] < 0 or self.events_per_video[1] < self.events_per_video[0]:
            raise ValueError(f"bad events-per-video range {self.events_per_video}")
        if self.events_per_video[1] * self.duration[1] > self.frames[1]:
            raise ValueError(
                f"infeasible packing: {self.events_per_video[1]} events of up to "
                f"{self.duration[1]} frames cannot fit in {self.frames[1]} frames"
            )


def video_rng(seed: int, video_id: str, stream: int = 0) -> np.random.Generator:
    """Independent generator for one video, stable across runs and platforms."""
    return np.random.default_rng([seed, zlib.crc32(video_id.encode()), stream])


def _place_events(rng, n_frames, durations, min_gap):
    # Spread the free frames over the n+1 gaps (stick breaking), which
    # yields non-overlapping events without rejection loops.
    n = len(durations)
    slack = n_frames - sum(durations) - min_gap * max(n - 1, 0)
    cuts = np.sort(rng.integers(0, slack + 1, size=n))
    onsets, cursor, prev = [], 0, 0
    for dur, cut in zip(durations, cuts):
        cursor += int(cut - prev)
        prev = cut
        onsets.append(cursor)
        cursor += dur + min_gap
    return onsets


def sample_annotation(config: DatasetConfig, video_id: str, subject_id: str) -> VideoAnnotation:
    rng = video_rng(config.seed, video_id)
    n_frames = int(rng.integers(config.frames[0], config.frames[1] + 1))
    n_events = int(rng.integers(config.events_per_video[0], config.events_per_video[1] + 1))
    weights = np.asarray(config.category_weights, dtype=float)
    weights = weights / weights.sum()
    for _ in range(1000):
        durations = [int(v) for v in rng.integers(config.duration[0], config.duration[1] + 1, size=n_events)]
        if sum(durations) + config.min_gap * max(n_events - 1, 0) <= n_frames:
            break
    else:
        raise ValueError(f"could not pack {n_events} events into {n_frames} frames for {video_id}")
    onsets = _place_events(rng, n_frames, durations, config.min_gap)
    events = []
    for onset, dur in zip(onsets, durations):
        apex = int(rng.integers(onset + 1, onset + dur))
        cat = int(rng.choice(config.num_classes, p=weights))
        events.append(ExpressionEvent(onset, onset + dur, apex, cat))
    return VideoAnnotation(video_id, subject_id, n_frames, tuple(events))


def generate_annotations(config: DatasetConfig) -> list[VideoAnnotation]:
    config.validate()
    out = []
    for i in range(config.num_subjects):
        subject = f"s{i:02d}"
        for j in range(config.videos_per_subject):
            out.append(sample_annotation(config, f"{subject}_v{j:02d}", subject))
    return out


def category_directions(config: DatasetConfig) -> np.ndarray:
    """``(C, d)`` orthonormal rows, one direction per category."""
    if config.num_classes > config.feature_dim:
        raise ValueError("need feature_dim >= num_classes for orthonormal directions")
    rng = np.random.default_rng([config.seed, 0x5EED])
    q, _ = np.linalg.qr(rng.standard_normal((config.feature_dim, config.num_classes)))
    return q.T.copy()


def amplitude_profile(event: ExpressionEvent, snr: float) -> np.ndarray:
    """Amplitude over ``event.onset .. event.offset - 1``."""
    t = np.arange(event.onset, event.offset, dtype=float)
    rise = (t - event.onset) / (event.apex - event.onset)
    fall = (event.offset - t) / (event.offset - event.apex)
    return snr * np.where(t <= event.apex, rise, fall)


def render_features(annotation: VideoAnnotation, config: DatasetConfig) -> FrameFeatureSequence:
    rng = video_rng(config.seed, annotation.video_id, stream=1)
    feats = rng.standard_normal((annotation.num_frames, config.feature_dim))
    dirs = category_directions(config)
    for ev in annotation.events:
        amp = amplitude_profile(ev, config.snr)
        feats[ev.onset:ev.offset] += amp[:, None] * dirs[ev.category][None, :]
    return FrameFeatureSequence(annotation.video_id, feats.astype(np.float32))


def generate_dataset(config: DatasetConfig) -> tuple[list[VideoAnnotation], list[FrameFeatureSequence]]:
    annotations = generate_annotations(config)
    return annotations, [render_features(a, config) for a in annotations]


def loso_folds(annotations: Sequence[VideoAnnotation]) -> list[tuple[str, list[int], list[int]]]:
    """``(held_out_subject, train_indices, test_indices)`` per subject."""
    subjects = sorted({a.subject_id for a in annotations})
    folds = []
    for subj in subjects:
        test = [i for i, a in enumerate(annotations) if a.subject_id == subj]
        train = [i for i, a in enumerate(annotations) if a.subject_id != subj]
        folds.append((subj, train, test))
    return folds


# -- files ------------------------------------------------------------------

_EMPTY = "-"


def save_annotations(annotations: Iterable[VideoAnnotation], path) -> None:
    """Write one tab-separated line per event.

    Columns: video_id, subject_id, N, onset, offset, apex, category.  A
    video without events is written as a single line whose four event
    columns are ``-``.
    """
    lines = []
    for a in annotations:
        head = f"{a.video_id}\t{a.subject_id}\t{a.num_frames}"
        if not a.events:
            lines.append(f"{head}\t{_EMPTY}\t{_EMPTY}\t{_EMPTY}\t{_EMPTY}")
        for ev in a.events:
            lines.append(f"{head}\t{ev.onset}\t{ev.offset}\t{ev.apex}\t{ev.category}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_annotations(path) -> list[VideoAnnotation]:
    videos: dict[str, tuple[str, int, list]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            if len(parts) != 7:
                raise ValueError(f"expected 7 tab-separated fields, got {len(parts)}")
            vid, subj, n = parts[0], parts[1], int(parts[2])
            entry = videos.setdefault(vid, (subj, n, []))
            if entry[0] != subj or entry[1] != n:
                raise ValueError(f"inconsistent subject or frame count for {vid}")
            if parts[3:] == [_EMPTY] * 4:
                continue
            onset, offset, apex, cat = (int(v) for v in parts[3:])
            if offset <= onset:
                raise ValueError(f"offset {offset} <= onset {onset}")
            entry[2].append(ExpressionEvent(onset, offset, apex, cat))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    out = []
    for vid, (subj, n, events) in videos.items():
        events.sort(key=lambda e: e.onset)
        out.append(VideoAnnotation(vid, subj, n, tuple(events)))
    return out


def save_features(seq: FrameFeatureSequence, path) -> None:
    feats = np.ascontiguousarray(seq.features, dtype="<f4")
    n, d = feats.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, n, d))
        fh.write(feats.tobytes())


def load_features(path, video_id: str | None = None) -> FrameFeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 4 * n * d:
        raise ValueError(f"{path}: expected {n}x{d} floats, found {len(body)} bytes")
    feats = np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float32)
    return FrameFeatureSequence(video_id or Path(path).stem, feats)


def feature_path(directory, video_id: str) -> Path:
    return Path(directory) / f"{video_id}.feat"


@dataclass
class Dataset:
    """Annotations together with their rendered features, in the same order."""

    annotations: list[VideoAnnotation]
    features: list[np.ndarray] = field(repr=False)

    @classmethod
    def generate(cls, config: DatasetConfig) -> "Dataset":
        annotations, seqs = generate_dataset(config)
        return cls(annotations, [s.features for s in seqs])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.annotations[i] for i in indices], [self.features[i] for i in indices])

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_annotations(self.annotations, directory / "annotations.tsv")
        for a, f in zip(self.annotations, self.features):
            save_features(FrameFeatureSequence(a.video_id, f), feature_path(directory, a.video_id))

    @classmethod
    def load(cls, directory) -> "Dataset":
        directory = Path(directory)
        annotations = load_annotations(directory / "annotations.tsv")
        feats = []
        for a in annotations:
            seq = load_features(feature_path(directory, a.video_id), a.video_id)
            if seq.features.shape[0] != a.num_frames:
                raise ValueError(f"{a.video_id}: feature rows {seq.features.shape[0]} != N {a.num_frames}")
            feats.append(seq.features)
        return cls(annotations, feats)
