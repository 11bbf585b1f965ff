"""
Train, detect and score on synthetic videos
===========================================

The desk-scale preset trains a small network for ten epochs on eight
synthetic videos (about a minute on one CPU core), runs sliding-window
detection over each whole video and scores the result with both F1 and
mAP over IoU thresholds.
"""

from pathlib import Path

import torch

from fedn.config import tiny_config
from fedn.evaluation import render_reports
from fedn.network import load_checkpoint, save_checkpoint
from fedn.plotting import plot_ap_vs_iou, plot_loss_curve
from fedn.synthetic import Dataset
from fedn.training import detect_dataset, score_dataset, train

torch.set_num_threads(1)
OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

config = tiny_config(seed=0)
dataset = Dataset.generate(config.data)
model, manifest = train(config, dataset)
print("epoch losses:", " ".join(f"{x:.3f}" for x in manifest.epoch_losses))
print(f"training took {manifest.wall_clock:.0f} s")

# Checkpoints are self-describing, so the config travels with the weights.
save_checkpoint(model, OUT / "tiny.fedn")
model, _ = load_checkpoint(OUT / "tiny.fedn")

predictions = detect_dataset(model, dataset, config.detect)
first = dataset.annotations[0]
print(f"\n{first.video_id}")
for ev in first.events:
    print(f"  truth      [{ev.onset:4d}, {ev.offset:4d})  category {ev.category}")
for det in predictions[first.video_id]:
    print(f"  detection  [{det.interval.start:6.1f}, {det.interval.end:6.1f})  "
          f"category {det.category}  conf {det.confidence:.2f}")

report = score_dataset(predictions, dataset, config.data.num_classes, name="tiny")
print()
print(render_reports([report]), end="")
print("confusion (rows true, columns predicted):")
print(report.confusion)

plot_loss_curve(manifest.epoch_losses, OUT / "loss_curve.png", manifest.step_losses)
plot_ap_vs_iou({"tiny": report.ap_spotting}, OUT / "ap_vs_iou_spotting.png", "spotting AP vs. IoU")
plot_ap_vs_iou({"tiny": report.ap_detection}, OUT / "ap_vs_iou_detection.png", "detection AP vs. IoU")
