"""Anchor layout, interval encoding and training-target assignment.

Every temporal position of every pyramid level carries six prediction
slots: slot 0 is anchor-free and slots 1-5 are anchor-based.  All geometry
here is window-normalized, i.e. the sliding window spans ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Interval

NUM_SLOTS = 6
LEVEL_STRIDES = (4, 8, 16, 32)
DEFAULT_SCALES = (0.5, 1.0, 1.5, 2.0, 3.0)
MIN_LENGTH = 1e-4
ANCHOR_FREE = "anchor_free"
ANCHOR_BASED = "anchor_based"


@dataclass(frozen=True)
class PyramidLayout:
    segments_per_window: int = 64

    def __post_init__(self):
        s = self.segments_per_window
        if s <= 0 or s % 32:
            raise ValueError(f"segments per window must be a positive multiple of 32, got {s}")

    @property
    def level_strides(self) -> tuple[int, ...]:
        return LEVEL_STRIDES

    @property
    def level_lengths(self) -> tuple[int, ...]:
        return tuple(self.segments_per_window // st for st in LEVEL_STRIDES)

    @property
    def num_positions(self) -> int:
        return sum(self.level_lengths)


@dataclass(frozen=True)
class AnchorSlot:
    level: int
    position: int
    kind: str
    center: float
    length: float
    cell: float  # width of one position at this level

    @property
    def is_anchor_free(self) -> bool:
        return self.kind == ANCHOR_FREE

    def geometry(self) -> Interval:
        """Interval used when matching this slot against ground truth."""
        half = 0.5 * (self.cell if self.is_anchor_free else self.length)
        return Interval(self.center - half, self.center + half)


@dataclass(frozen=True)
class RegressionTarget:
    """``(dc, dl)`` for anchor-based slots, ``(ys, ye)`` for anchor-free ones."""

    first: float
    second: float


def build_anchors(
    layout: PyramidLayout, scale_multipliers: Sequence[float] = DEFAULT_SCALES
) -> list[AnchorSlot]:
    scales = [float(m) for m in scale_multipliers]
    if len(scales) != NUM_SLOTS - 1:
        raise ValueError(f"expected {NUM_SLOTS - 1} scale multipliers, got {len(scales)}")
    if any(m <= 0 for m in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scale multipliers must be positive and strictly increasing")
    s = layout.segments_per_window
    slots = []
    for level, (length, stride) in enumerate(zip(layout.level_lengths, layout.level_strides)):
        cell = stride / s
        for p in range(length):
            center = (p + 0.5) / length
            slots.append(AnchorSlot(level, p, ANCHOR_FREE, center, cell, cell))
            for m in scales:
                slots.append(AnchorSlot(level, p, ANCHOR_BASED, center, m * cell, cell))
    return slots


@dataclass
class AnchorTable:
    """Array view of :func:`build_anchors`, shaped ``(positions, 6)``."""

    layout: PyramidLayout
    centers: np.ndarray
    lengths: np.ndarray
    cells: np.ndarray
    slots: list[AnchorSlot] = field(repr=False)

    @classmethod
    def build(cls, layout: PyramidLayout, scale_multipliers=DEFAULT_SCALES) -> "AnchorTable":
        slots = build_anchors(layout, scale_multipliers)
        shape = (layout.num_positions, NUM_SLOTS)
        centers = np.array([a.center for a in slots]).reshape(shape)
        lengths = np.array([a.length for a in slots]).reshape(shape)
        cells = np.array([a.cell for a in slots]).reshape(shape)
        return cls(layout, centers, lengths, cells, slots)

    def matching_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat start/end arrays of every slot's matching geometry."""
        half = 0.5 * self.lengths
        return (self.centers - half).ravel(), (self.centers + half).ravel()


def encode(gt: Interval, anchor: AnchorSlot) -> RegressionTarget:
    if anchor.is_anchor_free:
        raise ValueError("encode() applies to anchor-based slots only")
    dc = (gt.center() - anchor.center) / anchor.length
    dl = math.log(gt.length() / anchor.length)
    return RegressionTarget(dc, dl)


def decode(target: RegressionTarget, anchor: AnchorSlot) -> Interval:
    if anchor.is_anchor_free:
        ys, ye = sorted((target.first, target.second))
        ys = min(max(ys, 0.0), 1.0)
        ye = min(max(ye, 0.0), 1.0)
        if ye - ys < MIN_LENGTH:
            if ys + MIN_LENGTH <= 1.0:
                ye = ys + MIN_LENGTH
            else:
                ys = ye - MIN_LENGTH
        return Interval(ys, ye)
    center = anchor.center + target.first * anchor.length
    length = max(anchor.length * math.exp(target.second), MIN_LENGTH)
    return Interval(center - 0.5 * length, center + 0.5 * length)


@dataclass
class AssignmentResult:
    """Per-slot training targets, flattened in anchor-table order.

    Attributes:
        positive: ``(num_slots,)`` bool.
        matched_gt: ``(num_slots,)`` int, -1 on negative slots.
        category_target: ``(num_slots, C)`` float of 0/1.
        gt_bounds: ``(num_slots, 2)`` matched gt start/end, zero on negatives.
    """

    positive: np.ndarray
    matched_gt: np.ndarray
    category_target: np.ndarray
    gt_bounds: np.ndarray

    @property
    def num_positive(self) -> int:
        return int(self.positive.sum())


def _pairwise_iou(s1, e1, s2, e2):
    inter = np.clip(np.minimum(e1[:, None], e2[None, :]) - np.maximum(s1[:, None], s2[None, :]), 0, None)
    union = (e1 - s1)[:, None] + (e2 - s2)[None, :] - inter
    return inter / union


def assign_targets(
    table: AnchorTable,
    gts: Sequence[Interval],
    categories: Sequence[int],
    num_classes: int,
    pos_iou: float = 0.5,
) -> AssignmentResult:
    """Label each slot positive or negative against the window's ground truth.

    A slot is positive when its best IoU with any gt reaches ``pos_iou``.
    Additionally the best slot of every gt is forced positive for that gt,
    so no gt goes without a positive.
    """
    n = table.centers.size
    positive = np.zeros(n, dtype=bool)
    matched = np.full(n, -1, dtype=np.int64)
    target = np.zeros((n, num_classes))
    bounds = np.zeros((n, 2))
    if len(gts) == 0:
        return AssignmentResult(positive, matched, target, bounds)

    starts, ends = table.matching_bounds()
    gs = np.array([g.start for g in gts])
    ge = np.array([g.end for g in gts])
    overlaps = _pairwise_iou(starts, ends, gs, ge)  # (slots, gts)

    best_gt = overlaps.argmax(axis=1)
    best_iou = overlaps[np.arange(n), best_gt]
    hit = best_iou >= pos_iou
    positive[hit] = True
    matched[hit] = best_gt[hit]
    for gi in range(len(gts)):
        slot = int(overlaps[:, gi].argmax())
        positive[slot] = True
        matched[slot] = gi

    cats = np.asarray(categories, dtype=np.int64)
    idx = np.flatnonzero(positive)
    target[idx, cats[matched[idx]]] = 1.0
    bounds[idx, 0] = gs[matched[idx]]
    bounds[idx, 1] = ge[matched[idx]]
    return AssignmentResult(positive, matched, target, bounds)
