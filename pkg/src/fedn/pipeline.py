"""Video-level inference over overlapping sliding windows."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from .anchors import AnchorTable, RegressionTarget, decode
from .geometry import Interval, ScoredDetection, nms
from .network import FEDN, RawWindowPrediction


@dataclass(frozen=True)
class WindowPlan:
    window_starts: tuple[int, ...]
    frames_per_window: int
    segment_stride: int
    segments: int
    frames_per_segment: int

    @property
    def hop(self) -> int:
        return self.frames_per_window // 2


def plan_windows(num_frames: int, s: int = 64, f: int = 8, overlap: int = 6, hop: int | None = None) -> WindowPlan:
    """Window start frames covering ``[0, num_frames)``.

    Windows advance by half a window (or ``hop``); the last one is
    right-aligned with the end of the video.  Videos shorter than a window
    get a single window at 0.
    """
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    k = f - overlap
    if k <= 0:
        raise ValueError("overlap must be smaller than frames per segment")
    span = (s - 1) * k + f
    step = hop or span // 2
    last = max(0, num_frames - span)
    starts = list(range(0, last, step))
    starts.append(last)
    return WindowPlan(tuple(starts), span, k, s, f)


def slice_window(features: np.ndarray, start: int, plan: WindowPlan) -> np.ndarray:
    """``(s, f, d)`` block; frames past the end repeat the final frame."""
    idx = start + plan.segment_stride * np.arange(plan.segments)[:, None] + np.arange(plan.frames_per_segment)[None, :]
    idx = np.minimum(idx, features.shape[0] - 1)
    return features[idx]


def decode_window(
    interval: np.ndarray,
    logits: np.ndarray,
    table: AnchorTable,
    confidence_threshold: float = 0.3,
    confidence_logits: np.ndarray | None = None,
) -> list[ScoredDetection]:
    """Turn one window's slot outputs into window-normalized detections.

    Args:
        interval: ``(P, 6, 2)`` slot interval parameters.
        logits: ``(P, 6, C)`` category logits.
        confidence_logits: ``(P, 6)``, only for the confidence-branch variant.
    """
    scores = 1.0 / (1.0 + np.exp(-np.asarray(logits, dtype=np.float64)))
    if confidence_logits is not None:
        conf = 1.0 / (1.0 + np.exp(-np.asarray(confidence_logits, dtype=np.float64)))
    else:
        conf = scores.max(axis=-1)
    dets = []
    for p, k in zip(*np.nonzero(conf >= confidence_threshold)):
        slot = table.slots[p * 6 + k]
        iv = decode(RegressionTarget(float(interval[p, k, 0]), float(interval[p, k, 1])), slot)
        det = ScoredDetection.from_scores(iv, scores[p, k])
        if confidence_logits is not None:
            det = ScoredDetection(iv, float(conf[p, k]), det.category_scores, det.category)
        dets.append(det)
    return dets


def to_frames(det: ScoredDetection, window_start: int, plan: WindowPlan, num_frames: int) -> ScoredDetection | None:
    """Map a window-normalized detection to frames, clipped to ``[0, N)``."""
    span = plan.frames_per_window
    a = min(max(window_start + det.interval.start * span, 0.0), float(num_frames))
    b = min(max(window_start + det.interval.end * span, 0.0), float(num_frames))
    if b - a < 1.0:
        if num_frames < 1:
            return None
        mid = min(max(0.5 * (a + b), 0.5), num_frames - 0.5)
        a, b = mid - 0.5, mid + 0.5
    return ScoredDetection(Interval(a, b), det.confidence, det.category_scores, det.category)


@dataclass
class DetectConfig:
    overlap: int = 6
    confidence_threshold: float = 0.3
    nms_threshold: float = 0.3
    batch_windows: int = 32


@torch.no_grad()
def predict_windows(model: FEDN, blocks: np.ndarray, batch: int = 32) -> RawWindowPrediction:
    model.eval()
    dtype = next(model.parameters()).dtype
    outs = []
    for i in range(0, len(blocks), batch):
        outs.append(model(torch.as_tensor(blocks[i:i + batch], dtype=dtype)))
    conf = None
    if outs[0].confidence is not None:
        conf = torch.cat([o.confidence for o in outs])
    return RawWindowPrediction(
        torch.cat([o.interval for o in outs]), torch.cat([o.logits for o in outs]), conf, outs[0].level_lengths
    )


def detect_video(features: np.ndarray, model: FEDN, config: DetectConfig | None = None) -> list[ScoredDetection]:
    """Detections for a whole video in frame units, sorted by onset."""
    config = config or DetectConfig()
    cfg = model.cfg
    n = features.shape[0]
    plan = plan_windows(n, cfg.s, cfg.f, config.overlap)
    table = cfg.anchor_table()
    blocks = np.stack([slice_window(features, st, plan) for st in plan.window_starts])
    raw = predict_windows(model, blocks, config.batch_windows)
    interval = raw.interval.double().numpy()
    logits = raw.logits.double().numpy()
    conf = None if raw.confidence is None else raw.confidence.double().numpy()
    pooled = []
    for w, start in enumerate(plan.window_starts):
        dets = decode_window(
            interval[w], logits[w], table, config.confidence_threshold, None if conf is None else conf[w]
        )
        for det in dets:
            mapped = to_frames(det, start, plan, n)
            if mapped is not None:
                pooled.append(mapped)
    kept = nms(pooled, config.nms_threshold)
    return sorted(kept, key=lambda d: (d.interval.start, -d.confidence))


# -- prediction files -------------------------------------------------------

def save_predictions(predictions: Mapping[str, Sequence[ScoredDetection]], path) -> None:
    lines = []
    for vid in sorted(predictions):
        for det in predictions[vid]:
            lines.append(
                f"{vid}\t{det.interval.start:.4f}\t{det.interval.end:.4f}\t{det.confidence:.6f}\t{det.category}\n"
            )
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_predictions(path) -> dict[str, list[ScoredDetection]]:
    out: dict[str, list[ScoredDetection]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            if len(parts) != 5:
                raise ValueError(f"expected 5 tab-separated fields, got {len(parts)}")
            det = ScoredDetection(Interval(float(parts[1]), float(parts[2])), float(parts[3]), (), int(parts[4]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        out.setdefault(parts[0], []).append(det)
    return out
