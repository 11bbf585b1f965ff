"""
How detections are scored
=========================

Spotting F1 matches predictions to ground truth greedily by confidence at
IoU 0.5 and ignores categories.  Recognition F1 then looks only at the
matched pairs.  AP ranks every prediction across all videos and is averaged
over IoU thresholds 0.50 to 0.95; the class-aware version also needs the
category to agree.
"""

from fedn.evaluation import GroundTruth, evaluate, map_range, render_reports, spotting_f1
from fedn.geometry import Interval, ScoredDetection


def det(a, b, conf, cat):
    return ScoredDetection(Interval(a, b), conf, (), cat)


truth = {
    "v0": [GroundTruth(Interval(10, 40), 0), GroundTruth(Interval(100, 130), 2), GroundTruth(Interval(300, 320), 3)],
    "v1": [GroundTruth(Interval(50, 90), 0), GroundTruth(Interval(200, 260), 2)],
}
preds = {
    "v0": [det(12, 41, 0.95, 0), det(98, 125, 0.80, 0), det(500, 520, 0.40, 1)],
    "v1": [det(52, 88, 0.90, 0), det(205, 240, 0.70, 2), det(400, 430, 0.35, 3)],
}

res = spotting_f1(preds, truth)
print(f"TP {res.tp}  FP {res.fp}  FN {res.fn}  spotting F1 {res.f1:.3f}")
for p in res.pairs:
    print(f"  {p.video_id}: true {p.true_category}, predicted {p.pred_category}")

# A prediction shifted by a fifth of its length counts at loose thresholds only.
per_iou, m = map_range([det(12, 22, 0.9, 0)], [GroundTruth(Interval(10, 20), 0)])
print("AP per IoU for a shifted prediction:", {t: v for t, v in per_iou.items()})
print(f"mAP {m:.2f}")

# Reports print F1 x 100 and mAP x 1000; '-' marks metrics that do not apply.
full = evaluate(preds, truth, num_classes=4, name="joint")
spot = evaluate(preds, truth, num_classes=4, spotting_only=True, name="spotting only")
print()
print(render_reports([full, spot]), end="")
