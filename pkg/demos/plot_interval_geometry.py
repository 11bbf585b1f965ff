"""
Overlap measures for 1D intervals
=================================

IoU, GIoU and DIoU on a pair of intervals as one slides past the other,
the corresponding losses, and greedy NMS on a handful of detections.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fedn.geometry import Interval, ScoredDetection, diou, diou_loss_with_grad, giou, iou, nms

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

# A fixed ground truth and a prediction of the same length that starts far to
# the left and slides across it.
gt = Interval(40.0, 60.0)
shifts = np.linspace(-40, 40, 401)
rows = []
for dx in shifts:
    pred = Interval(40.0 + dx, 60.0 + dx)
    rows.append((iou(pred, gt), giou(pred, gt), diou(pred, gt)))
rows = np.array(rows)

fig, ax = plt.subplots(figsize=(6, 3.5))
for k, name in enumerate(["IoU", "GIoU", "DIoU"]):
    ax.plot(shifts, rows[:, k], label=name)
ax.set_xlabel("prediction offset (frames)")
ax.set_ylabel("overlap")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "overlap_vs_offset.png", dpi=120)

# IoU is flat at zero once the intervals stop touching, so its loss gives no
# direction to move in.  The DIoU loss keeps a slope there.
far = Interval(0.0, 4.0)
target = Interval(6.0, 10.0)
loss, d_start, d_end = diou_loss_with_grad(far, target)
print(f"IoU  {iou(far, target):.3f}  GIoU {giou(far, target):.3f}  DIoU {diou(far, target):.3f}")
print(f"DIoU loss {loss:.3f}, d/dstart {d_start:+.4f}, d/dend {d_end:+.4f}")

# Gradient descent on the raw endpoints with the analytic gradient.
s, e = far.start, far.end
for step in range(200):
    _, gs, ge = diou_loss_with_grad(Interval(s, e), target)
    s, e = s - 2.0 * gs, e - 2.0 * ge
print(f"after 200 steps: [{s:.2f}, {e:.2f}] vs target [6, 10]")

# NMS keeps the most confident detection of each overlapping cluster.
dets = [
    ScoredDetection(Interval(10, 30), 0.92, (), 0),
    ScoredDetection(Interval(12, 31), 0.80, (), 0),
    ScoredDetection(Interval(8, 27), 0.55, (), 2),
    ScoredDetection(Interval(50, 70), 0.60, (), 1),
    ScoredDetection(Interval(66, 90), 0.58, (), 3),
]
for d in nms(dets, 0.3):
    print(f"kept [{d.interval.start:g}, {d.interval.end:g})  conf {d.confidence:.2f}  category {d.category}")
