"""Independent reference computations shared by several test modules."""

from fractions import Fraction

import numpy as np
import torch

from fedn.anchors import assign_targets
from fedn.evaluation import GroundTruth
from fedn.geometry import Interval, ScoredDetection, diou, iou
from fedn.network import NetworkConfig


def tiny_config(**kw):
    base = dict(s=32, f=4, d=16, d1=16, d2=8, num_classes=3, attention_heads=2)
    base.update(kw)
    return NetworkConfig(**base)


def central_difference(fn, tensor, index, h=1e-6):
    """d fn() / d tensor[index] by central differences, restoring the entry."""
    with torch.no_grad():
        orig = tensor[index].item()
        tensor[index] = orig + h
        up = fn().item()
        tensor[index] = orig - h
        down = fn().item()
        tensor[index] = orig
    return (up - down) / (2 * h)


def rel_err(a, b, floor=1e-7):
    return abs(a - b) / max(abs(a), abs(b), floor)


def random_assignments(cfg, batch, rng, max_gts=2):
    table = cfg.anchor_table()
    out = []
    for _ in range(batch):
        gts, cats = [], []
        for _ in range(int(rng.integers(0, max_gts + 1))):
            s = rng.uniform(0, 0.7)
            gts.append(Interval(s, s + rng.uniform(0.05, 0.3)))
            cats.append(int(rng.integers(0, cfg.output_classes)))
        out.append(assign_targets(table, gts, cats, cfg.output_classes, cfg.pos_iou))
    return out


def random_block(cfg, batch, rng, dtype=torch.float64):
    return torch.as_tensor(rng.standard_normal((batch, cfg.s, cfg.f, cfg.d)), dtype=dtype)


def monte_carlo_overlap(a, b, rng, n=100_000):
    """IoU, GIoU and DIoU from jittered-stratified samples over the hull."""
    lo, hi = min(a.start, b.start), max(a.end, b.end)
    x = lo + (np.arange(n) + rng.uniform(0, 1, n)) * (hi - lo) / n
    in_a = (x >= a.start) & (x < a.end)
    in_b = (x >= b.start) & (x < b.end)
    union_frac = np.mean(in_a | in_b)
    inter_frac = np.mean(in_a & in_b)
    est_iou = inter_frac / union_frac
    est_giou = est_iou - (1.0 - union_frac)
    est_diou = est_iou - (a.center() - b.center()) ** 2 / (hi - lo) ** 2
    return est_iou, est_giou, est_diou


def diou_finite_difference(pred, gt, h=1e-5):
    def f(s, e):
        return 1.0 - diou(Interval(s, e), gt)

    ds = (f(pred.start + h, pred.end) - f(pred.start - h, pred.end)) / (2 * h)
    de = (f(pred.start, pred.end + h) - f(pred.start, pred.end - h)) / (2 * h)
    return ds, de


def near_regime_boundary(p, g, margin=1e-3):
    points = [p.start - g.start, p.end - g.end, p.start - g.end, p.end - g.start]
    return min(abs(v) for v in points) < margin


def oracle_hits(preds, gts, t, class_aware):
    """Walk predictions globally by confidence; each takes the best free gt in its video."""
    order = sorted(
        ((vid, i, d) for vid, ds in preds.items() for i, d in enumerate(ds)),
        key=lambda x: (-x[2].confidence, x[0], x[2].interval.start, x[2].category),
    )
    taken = set()
    hits = []
    for vid, _, d in order:
        best, best_iou = None, -1.0
        for j, g in enumerate(gts.get(vid, [])):
            if (vid, j) in taken or (class_aware and g.category != d.category):
                continue
            v = iou(d.interval, g.interval)
            if v >= t and v > best_iou:
                best, best_iou = j, v
        if best is not None:
            taken.add((vid, best))
        hits.append(best is not None)
    return hits


def oracle_ap_from_hits(hits, num_gts):
    """Enumerate every cutoff of the ranked list; interpolate by max precision at recall >= r."""
    points = []
    tp = 0
    for k, h in enumerate(hits, start=1):
        tp += h
        points.append((Fraction(tp, num_gts), Fraction(tp, k)))
    total = Fraction(0)
    for i in range(101):
        r = Fraction(i, 100)
        total += max((p for rec, p in points if rec >= r), default=Fraction(0))
    return total / 101


def oracle_ap(preds, gts, t, class_aware=False):
    if not class_aware:
        n = sum(len(v) for v in gts.values())
        return None if n == 0 else oracle_ap_from_hits(oracle_hits(preds, gts, t, False), n)
    cats = sorted({g.category for v in gts.values() for g in v})
    if not cats:
        return None
    aps = []
    for c in cats:
        pc = {vid: [d for d in v if d.category == c] for vid, v in preds.items()}
        gc = {vid: [g for g in v if g.category == c] for vid, v in gts.items()}
        n = sum(len(v) for v in gc.values())
        aps.append(oracle_ap_from_hits(oracle_hits(pc, gc, t, False), n))
    return sum(aps) / len(aps)


def det(a, b, conf, cat=0):
    return ScoredDetection(Interval(a, b), conf, (), cat)


def gt(a, b, cat=0):
    return GroundTruth(Interval(a, b), cat)


def random_instance(rng, max_preds=6, max_gts=4, videos=2, cats=2):
    """Small multi-video AP instance on an integer grid with distinct confidences."""
    preds, gts = {}, {}
    confs = rng.permutation(np.linspace(0.05, 0.95, max_preds * videos))
    k = 0
    for v in range(videos):
        g = [gt(a, a + int(rng.integers(2, 8)), int(rng.integers(0, cats)))
             for a in rng.integers(0, 20, int(rng.integers(0, max_gts + 1)))]
        p = []
        for _ in range(int(rng.integers(0, max_preds + 1))):
            a = int(rng.integers(0, 20))
            p.append(det(a, a + int(rng.integers(2, 8)), float(confs[k]), int(rng.integers(0, cats))))
            k += 1
        gts[f"v{v}"], preds[f"v{v}"] = g, p
    return preds, gts


# a config small enough for full command-line round trips in seconds
SMALL_INI = """\
[train]
epochs = 1
batch_windows = 4
learning_rate = 0.001
train_hop = 16

[network]
s = 32
f = 4
d = 16
d1 = 16
d2 = 8
attention_heads = 2

[data]
num_subjects = 2
videos_per_subject = 1
frames = 150, 220
events_per_video = 1, 2
duration = 10, 40
feature_dim = 16

[detect]
overlap = 2
"""
