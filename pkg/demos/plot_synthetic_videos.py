"""
A synthetic long-video benchmark
================================

Each video is a sequence of per-frame feature vectors: unit Gaussian noise
plus, inside every planted event, a bump along that event's category
direction that ramps up to its apex and back down.  This script generates a
small dataset, writes it to disk and looks at one video.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fedn.synthetic import Dataset, DatasetConfig, category_directions, loso_folds

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

config = DatasetConfig(num_subjects=4, videos_per_subject=2, snr=8.0, seed=0)
dataset = Dataset.generate(config)
dataset.save(OUT / "synthetic")
print(f"{len(dataset.annotations)} videos written to {OUT / 'synthetic'}")

ann, feats = dataset.annotations[0], dataset.features[0]
print(f"{ann.video_id}: {ann.num_frames} frames, {len(ann.events)} events")
for ev in ann.events:
    print(f"  [{ev.onset:4d}, {ev.offset:4d})  apex {ev.apex:4d}  category {ev.category}")

# Projecting onto the category directions recovers the ramps; noise stays
# at unit scale in every direction.
proj = feats.astype(np.float64) @ category_directions(config).T
fig, ax = plt.subplots(figsize=(8, 3.5))
for c in range(config.num_classes):
    ax.plot(proj[:, c], lw=0.7, label=f"category {c}")
for ev in ann.events:
    ax.axvspan(ev.onset, ev.offset, color="0.85", zorder=0)
ax.set_xlabel("frame")
ax.set_ylabel("projection")
ax.legend(fontsize=7, ncol=4)
fig.tight_layout()
fig.savefig(OUT / "synthetic_projection.png", dpi=120)

# Category frequencies follow the configured weights.
cats = np.bincount([e.category for a in dataset.annotations for e in a.events], minlength=config.num_classes)
print("events per category:", cats.tolist())

# One fold per subject.
for subject, train_idx, test_idx in loso_folds(dataset.annotations):
    print(f"fold {subject}: train on {len(train_idx)} videos, test on {len(test_idx)}")
