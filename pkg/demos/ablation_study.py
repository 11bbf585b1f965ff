"""
Ablations under leave-one-subject-out
=====================================

Runs LOSO for several architecture and loss variants with a shared seed and
prints one row per variant.  Each fold trains from scratch, so this takes a
while; pass variant names on the command line to run fewer of them, e.g.
``python demos/ablation_study.py full no_both``.
"""

import dataclasses
import sys

import torch

from fedn.config import tiny_config
from fedn.synthetic import Dataset
from fedn.training import VARIANTS, ablate, ablation_table

torch.set_num_threads(1)

variants = sys.argv[1:] or list(VARIANTS)
base = tiny_config(seed=0)
# three subjects, shorter videos: three folds per variant
data = dataclasses.replace(base.data, num_subjects=3, frames=(400, 600), events_per_video=(2, 3), duration=(30, 100))
config = dataclasses.replace(base, data=data, epochs=20, train_hop=12)

dataset = Dataset.generate(config.data)
reports = ablate(config, dataset, variants)
print(ablation_table(reports), end="")
