"""Training objective: interval overlap loss plus per-slot recognition BCE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F

from .anchors import MIN_LENGTH, AnchorTable, AssignmentResult
from .geometry import Interval, diou, giou, iou
from .network import RawWindowPrediction

_SIMILARITY = {"diou": diou, "giou": giou, "iou": iou}


@dataclass
class LossBreakdown:
    interval_loss: float
    recognition_loss: float
    total: float
    num_positive: int
    num_slots: int


def interval_loss(pred: Interval, gt: Interval | None, variant: str = "diou") -> float:
    """Scalar reference version; zero for a negative slot (``gt is None``)."""
    if gt is None:
        return 0.0
    return 1.0 - _SIMILARITY[variant](pred, gt)


def overlap_loss(ps, pe, gs, ge, variant: str = "diou"):
    """Elementwise ``1 - {diou,giou,iou}`` over tensors of interval bounds."""
    inter = (torch.minimum(pe, ge) - torch.maximum(ps, gs)).clamp(min=0)
    union = (pe - ps) + (ge - gs) - inter
    value = inter / union
    if variant != "iou":
        hull = torch.maximum(pe, ge) - torch.minimum(ps, gs)
        if variant == "giou":
            value = value - (hull - union) / hull
        else:
            dc = 0.5 * (ps + pe) - 0.5 * (gs + ge)
            value = value - dc * dc / (hull * hull)
    return 1.0 - value


def recognition_loss(category_logits, category_target):
    """Sum over categories of binary cross-entropy on sigmoid(logits)."""
    logits = torch.as_tensor(category_logits, dtype=torch.float64)
    target = torch.as_tensor(category_target, dtype=logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, target, reduction="none").sum(-1)


def decode_intervals(interval: torch.Tensor, table: AnchorTable):
    """Differentiable decode of ``(B, P, 6, 2)`` slot outputs to start/end tensors."""
    centers = torch.as_tensor(table.centers, dtype=interval.dtype)
    lengths = torch.as_tensor(table.lengths, dtype=interval.dtype)

    a, b = interval[..., 0], interval[..., 1]
    # anchor-free: order, clamp to the window, enforce a minimum length
    ys = torch.minimum(a[..., 0], b[..., 0]).clamp(0.0, 1.0 - MIN_LENGTH)
    ye = torch.maximum(torch.maximum(a[..., 0], b[..., 0]).clamp(0.0, 1.0), ys + MIN_LENGTH)
    # anchor-based: centre offset in anchor lengths, log length ratio
    center = centers[:, 1:] + a[..., 1:] * lengths[:, 1:]
    length = (lengths[:, 1:] * torch.exp(b[..., 1:].clamp(max=20.0))).clamp(min=MIN_LENGTH)
    starts = torch.cat([ys.unsqueeze(-1), center - 0.5 * length], dim=-1)
    ends = torch.cat([ye.unsqueeze(-1), center + 0.5 * length], dim=-1)
    return starts, ends


def stack_assignments(assignments: list[AssignmentResult], dtype=torch.float32):
    positive = torch.as_tensor(np.stack([a.positive for a in assignments]), dtype=torch.bool)
    target = torch.as_tensor(np.stack([a.category_target for a in assignments]), dtype=dtype)
    bounds = torch.as_tensor(np.stack([a.gt_bounds for a in assignments]), dtype=dtype)
    return positive, target, bounds


def _interval_term(raw, table, positive, bounds, variant):
    b = raw.interval.shape[0]
    starts, ends = decode_intervals(raw.interval, table)
    starts, ends = starts.reshape(b, -1), ends.reshape(b, -1)
    per_slot = overlap_loss(starts, ends, bounds[..., 0], bounds[..., 1], variant)
    per_slot = torch.where(positive, per_slot, torch.zeros_like(per_slot))
    npos = positive.sum(dim=1)
    interval_term = per_slot.sum(dim=1) / npos.clamp(min=1)
    return interval_term, npos


def variant_confidence_loss(raw: RawWindowPrediction, positive, target):
    """Confidence-branch variant of the recognition term, per window.

    The confidence logit is trained by BCE against the positive/negative
    label over all slots; category logits get softmax cross-entropy on
    positive slots only.
    """
    if raw.confidence is None:
        raise ValueError("variant_confidence_loss needs a network built with_confidence_branch")
    b = raw.logits.shape[0]
    conf = raw.confidence.reshape(b, -1)
    logits = raw.logits.reshape(b, conf.shape[1], -1)
    bce = F.binary_cross_entropy_with_logits(conf, positive.to(conf.dtype), reduction="none").mean(dim=1)
    labels = target.argmax(dim=-1)
    cce = F.cross_entropy(logits.transpose(1, 2), labels, reduction="none")
    cce = torch.where(positive, cce, torch.zeros_like(cce)).sum(dim=1) / positive.sum(dim=1).clamp(min=1)
    return bce + cce


def total_loss_tensor(raw: RawWindowPrediction, table: AnchorTable, positive, target, bounds,
                      alpha=1.0, beta=2.0, variant="diou"):
    """Batch-mean objective as a differentiable tensor, plus per-term means.

    Per window, the interval term is averaged over positive slots and the
    recognition term over all slots.
    """
    b = raw.interval.shape[0]
    interval_term, npos = _interval_term(raw, table, positive, bounds, variant)
    if raw.confidence is not None:
        recog_term = variant_confidence_loss(raw, positive, target)
    else:
        logits = raw.logits.reshape(b, -1, raw.logits.shape[-1])
        recog_term = F.binary_cross_entropy_with_logits(logits, target, reduction="none").sum(-1).mean(dim=1)
    total = (alpha * interval_term + beta * recog_term).mean()
    return total, interval_term.mean(), recog_term.mean(), int(npos.sum())


def total_loss(raw: RawWindowPrediction, assignments, table: AnchorTable,
               alpha=1.0, beta=2.0, variant="diou") -> LossBreakdown:
    if isinstance(assignments, AssignmentResult):
        assignments = [assignments]
    positive, target, bounds = stack_assignments(assignments, raw.interval.dtype)
    total, li, lc, npos = total_loss_tensor(raw, table, positive, target, bounds, alpha, beta, variant)
    return LossBreakdown(float(li), float(lc), float(total), npos, int(positive[0].numel()))

