"""Spotting/recognition F1, AP over IoU thresholds, confusion matrices and reports.

Predictions and ground truth are passed as mappings from video id to the
per-video sequences; a bare sequence is treated as a single video.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .geometry import Interval, match_greedy

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GroundTruth:
    interval: Interval
    category: int = 0


def _as_videos(data) -> dict:
    if isinstance(data, Mapping):
        return dict(data)
    return {"": list(data)}


def _video_ids(preds, gts):
    return sorted(set(preds) | set(gts))


@dataclass
class MatchedPair:
    video_id: str
    true_category: int
    pred_category: int


@dataclass
class SpottingResult:
    tp: int
    fp: int
    fn: int
    f1: float
    trivial: bool  # no predictions and no ground truth at all
    pairs: list[MatchedPair] = field(default_factory=list)


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def spotting_f1(preds, gts, iou_threshold: float = 0.5) -> SpottingResult:
    """Category-agnostic F1: a prediction is a TP when it matches a gt at IoU >= 0.5."""
    preds, gts = _as_videos(preds), _as_videos(gts)
    tp = fp = fn = 0
    pairs = []
    for vid in _video_ids(preds, gts):
        p, g = preds.get(vid, []), gts.get(vid, [])
        matches = match_greedy(p, [t.interval for t in g], iou_threshold)
        tp += len(matches)
        fp += len(p) - len(matches)
        fn += len(g) - len(matches)
        pairs += [MatchedPair(vid, g[gi].category, p[pi].category) for pi, gi in matches]
    return SpottingResult(tp, fp, fn, f1_from_counts(tp, fp, fn), tp + fp + fn == 0, pairs)


def recognition_f1(pairs: Sequence[MatchedPair]) -> Optional[float]:
    """Micro-averaged F1 over matched intervals, i.e. label accuracy; None with no matches."""
    if not pairs:
        return None
    return sum(p.true_category == p.pred_category for p in pairs) / len(pairs)


def confusion_matrix(pairs: Sequence[MatchedPair], num_classes: int) -> np.ndarray:
    """Rows are true categories, columns predicted ones."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p in pairs:
        cm[p.true_category, p.pred_category] += 1
    return cm


def _ranked(preds):
    flat = [(vid, i, det) for vid, dets in preds.items() for i, det in enumerate(dets)]
    flat.sort(key=lambda t: (-t[2].confidence, t[0], t[2].interval.start, t[2].category))
    return flat


def _interpolated_ap(hits: Sequence[bool], num_gts: int) -> float:
    if not len(hits):
        return 0.0
    tp = np.cumsum(hits)
    fp = np.cumsum(np.logical_not(hits))
    recall = tp / num_gts
    precision = tp / (tp + fp)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def _agnostic_ap(preds: dict, gts: dict, iou_threshold: float) -> Optional[float]:
    num_gts = sum(len(v) for v in gts.values())
    if num_gts == 0:
        return None
    ranked = _ranked(preds)
    # greedy matching within a video visits predictions in the same global order
    matched = set()
    for vid in _video_ids(preds, gts):
        p, g = preds.get(vid, []), gts.get(vid, [])
        for pi, _ in match_greedy(p, [t.interval for t in g], iou_threshold):
            matched.add((vid, pi))
    hits = [(vid, i) in matched for vid, i, _ in ranked]
    return _interpolated_ap(hits, num_gts)


def average_precision(preds, gts, iou_threshold: float, class_aware: bool = False) -> Optional[float]:
    """COCO-style 101-point interpolated AP at one IoU threshold.

    With ``class_aware`` a match also needs equal categories, and the result
    is the mean of per-category APs over categories that have ground truth.
    Returns None when there is no ground truth to find.
    """
    preds, gts = _as_videos(preds), _as_videos(gts)
    if not class_aware:
        return _agnostic_ap(preds, gts, iou_threshold)
    cats = sorted({t.category for v in gts.values() for t in v})
    if not cats:
        return None
    aps = []
    for c in cats:
        pc = {vid: [d for d in v if d.category == c] for vid, v in preds.items()}
        gc = {vid: [t for t in v if t.category == c] for vid, v in gts.items()}
        aps.append(_agnostic_ap(pc, gc, iou_threshold))
    return float(np.mean(aps))


def map_range(preds, gts, class_aware: bool = False, thresholds=IOU_THRESHOLDS):
    """AP at each IoU threshold and their mean; (None, None) without ground truth."""
    per_iou = {t: average_precision(preds, gts, t, class_aware) for t in thresholds}
    if any(v is None for v in per_iou.values()):
        return None, None
    return per_iou, float(np.mean(list(per_iou.values())))


@dataclass
class EvalReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    spotting_f1: float = 0.0
    recognition_f1: Optional[float] = None
    ap_spotting: Optional[dict] = None
    ap_detection: Optional[dict] = None
    spotting_map: Optional[float] = None
    detection_map: Optional[float] = None
    confusion: Optional[np.ndarray] = None
    trivial_f1: bool = False
    spotting_only: bool = False
    name: str = "FEDN"

    def to_dict(self) -> dict:
        def keyed(d):
            return None if d is None else {f"{k:.2f}": v for k, v in d.items()}

        return {
            "name": self.name,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "spotting_f1": self.spotting_f1,
            "recognition_f1": self.recognition_f1,
            "ap_spotting": keyed(self.ap_spotting),
            "ap_detection": keyed(self.ap_detection),
            "spotting_map": self.spotting_map,
            "detection_map": self.detection_map,
            "confusion": None if self.confusion is None else self.confusion.tolist(),
            "trivial_f1": self.trivial_f1,
            "spotting_only": self.spotting_only,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        def unkeyed(x):
            return None if x is None else {float(k): v for k, v in x.items()}

        d = dict(d)
        d["ap_spotting"] = unkeyed(d.get("ap_spotting"))
        d["ap_detection"] = unkeyed(d.get("ap_detection"))
        if d.get("confusion") is not None:
            d["confusion"] = np.asarray(d["confusion"], dtype=np.int64)
        return cls(**d)


def evaluate(preds, gts, num_classes: int, spotting_only: bool = False, name: str = "FEDN") -> EvalReport:
    preds, gts = _as_videos(preds), _as_videos(gts)
    spot = spotting_f1(preds, gts)
    ap_s, map_s = map_range(preds, gts)
    report = EvalReport(
        tp=spot.tp, fp=spot.fp, fn=spot.fn, spotting_f1=spot.f1, trivial_f1=spot.trivial,
        ap_spotting=ap_s, spotting_map=map_s, spotting_only=spotting_only, name=name,
    )
    if not spotting_only:
        report.recognition_f1 = recognition_f1(spot.pairs)
        report.ap_detection, report.detection_map = map_range(preds, gts, class_aware=True)
        report.confusion = confusion_matrix(spot.pairs, num_classes)
    return report


# -- report files -----------------------------------------------------------

COLUMNS = ("name", "TP", "FP", "FN", "F1-S", "F1-R", "mAP-S", "mAP-D")


def format_f1(value: Optional[float]) -> str:
    """F1 scaled by 10^2, one decimal."""
    return "-" if value is None else f"{100 * value:.1f}"


def format_map(value: Optional[float]) -> str:
    """mAP scaled by 10^3; whole numbers from 100 up, one decimal below."""
    if value is None:
        return "-"
    scaled = 1000 * value
    return f"{scaled:.0f}" if round(scaled, 1) >= 100 else f"{scaled:.1f}"


def report_row(report: EvalReport) -> list[str]:
    recog = None if report.spotting_only else report.recognition_f1
    det = None if report.spotting_only else report.detection_map
    return [
        report.name, str(report.tp), str(report.fp), str(report.fn),
        format_f1(report.spotting_f1), format_f1(recog), format_map(report.spotting_map), format_map(det),
    ]


def render_reports(reports: Sequence[EvalReport], fmt: str = "text_table") -> str:
    rows = [list(COLUMNS)] + [report_row(r) for r in reports]
    if fmt == "delimited":
        return "".join("\t".join(r) + "\n" for r in rows)
    if fmt != "text_table":
        raise ValueError(f"unknown report format {fmt!r}")
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
    lines = []
    for n, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def emit_report(reports, path, fmt: str = "text_table") -> None:
    if isinstance(reports, EvalReport):
        reports = [reports]
    Path(path).write_text(render_reports(reports, fmt), encoding="utf-8")


def save_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_report_json(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
