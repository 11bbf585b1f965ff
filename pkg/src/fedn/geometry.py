"""1D interval geometry.

Intervals are half-open ``[start, end)`` spans in frame units (or
window-normalized units; the arithmetic does not care).  Everything here
is a pure function over immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True, order=True)
class Interval:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"empty or inverted interval [{self.start}, {self.end})")

    def length(self) -> float:
        return self.end - self.start

    def center(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class ScoredDetection:
    """A detected expression: interval, confidence and per-category scores."""

    interval: Interval
    confidence: float
    category_scores: tuple[float, ...] = ()
    category: int = 0

    @classmethod
    def from_scores(cls, interval: Interval, scores: Sequence[float]) -> "ScoredDetection":
        """Build a detection whose confidence is its best category score.

        Ties in the argmax resolve to the lowest category index.
        """
        scores = tuple(float(v) for v in scores)
        best = 0
        for i, v in enumerate(scores):
            if v > scores[best]:
                best = i
        return cls(interval, scores[best], scores, best)


def _overlap(a: Interval, b: Interval) -> float:
    return max(0.0, min(a.end, b.end) - max(a.start, b.start))


def _hull(a: Interval, b: Interval) -> float:
    return max(a.end, b.end) - min(a.start, b.start)


def iou(a: Interval, b: Interval) -> float:
    inter = _overlap(a, b)
    return inter / (a.length() + b.length() - inter)


def giou(a: Interval, b: Interval) -> float:
    inter = _overlap(a, b)
    union = a.length() + b.length() - inter
    hull = _hull(a, b)
    return inter / union - (hull - union) / hull


def diou(a: Interval, b: Interval) -> float:
    hull = _hull(a, b)
    return iou(a, b) - (a.center() - b.center()) ** 2 / hull**2


def diou_loss_with_grad(pred: Interval, gt: Interval) -> tuple[float, float, float]:
    """Return ``1 - diou(pred, gt)`` and its derivatives w.r.t. pred start/end.

    The derivative is piecewise; at regime boundaries (coincident or
    touching endpoints) the one-sided derivative approached from below is
    used.
    """
    ps, pe, gs, ge = pred.start, pred.end, gt.start, gt.end

    lo, hi = max(ps, gs), min(pe, ge)
    inter = max(0.0, hi - lo)
    union = (pe - ps) + (ge - gs) - inter
    hull = max(pe, ge) - min(ps, gs)
    dc = 0.5 * (ps + pe) - 0.5 * (gs + ge)
    value = inter / union - dc * dc / (hull * hull)

    overlapping = hi - lo > 0
    # d(inter)
    di_ds = -1.0 if (overlapping and ps > gs) else 0.0
    di_de = 1.0 if (overlapping and pe <= ge) else 0.0
    # d(union) = d(len_pred) - d(inter)
    du_ds = -1.0 - di_ds
    du_de = 1.0 - di_de
    # d(hull)
    dh_ds = -1.0 if ps <= gs else 0.0
    dh_de = 1.0 if pe > ge else 0.0

    def d_value(di, du, dh):
        d_iou = (di * union - inter * du) / (union * union)
        d_pen = (dc * hull - 2.0 * dc * dc * dh) / hull**3
        return d_iou - d_pen

    # d(dc)/d(start) = d(dc)/d(end) = 1/2, hence the ``dc * hull`` term above.
    return 1.0 - value, -d_value(di_ds, du_ds, dh_ds), -d_value(di_de, du_de, dh_de)


def _rank_key(det: ScoredDetection):
    return (-det.confidence, det.interval.start, det.category)


def sort_by_confidence(detections: Sequence[ScoredDetection]) -> list[ScoredDetection]:
    """Descending confidence; ties go to the earlier start, then lower category."""
    return sorted(detections, key=_rank_key)


def nms(detections: Sequence[ScoredDetection], iou_threshold: float) -> list[ScoredDetection]:
    """Greedy non-maximum suppression.

    A detection is dropped when its IoU with an already kept one exceeds
    ``iou_threshold``.  Output is in descending confidence order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    kept: list[ScoredDetection] = []
    for det in sort_by_confidence(detections):
        if all(iou(det.interval, k.interval) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


def match_greedy(
    preds: Sequence[ScoredDetection],
    gts: Sequence[Interval],
    iou_threshold: float,
    require_category: bool = False,
    gt_categories: Sequence[int] | None = None,
) -> list[tuple[int, int]]:
    """Confidence-ordered greedy matching of predictions to ground truth.

    Each prediction, from most to least confident, takes the still
    unmatched gt with the highest IoU, provided that IoU reaches
    ``iou_threshold`` (and the categories agree when ``require_category``).
    Ties between gts go to the lower gt index.

    Returns:
        ``(pred_index, gt_index)`` pairs, in the order the matches were made.
        Indices refer to the input sequences.
    """
    if require_category and gt_categories is None:
        raise ValueError("gt_categories is required when require_category is set")
    order = sorted(range(len(preds)), key=lambda i: _rank_key(preds[i]))
    taken = [False] * len(gts)
    pairs = []
    for pi in order:
        pred = preds[pi]
        best, best_iou = -1, -1.0
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            if require_category and gt_categories[gi] != pred.category:
                continue
            v = iou(pred.interval, gt)
            if v >= iou_threshold and v > best_iou:
                best, best_iou = gi, v
        if best >= 0:
            taken[best] = True
            pairs.append((pi, best))
    return pairs
