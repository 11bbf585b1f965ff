"""Training loop, leave-one-subject-out evaluation and the ablation matrix."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .anchors import AnchorTable, AssignmentResult, assign_targets
from .evaluation import EvalReport, GroundTruth, evaluate, render_reports
from .geometry import Interval
from .losses import total_loss_tensor
from .network import FEDN, NetworkConfig, build_model
from .pipeline import DetectConfig, WindowPlan, detect_video, plan_windows, slice_window
from .synthetic import Dataset, DatasetConfig, VideoAnnotation, loso_folds

log = logging.getLogger(__name__)

VARIANTS = {
    "full": {},
    "no_seg_att": {"use_segment_attention": False},
    "no_sw_att": {"use_window_attention": False},
    "no_both": {"use_segment_attention": False, "use_window_attention": False},
    "spotting_only": {"spotting_only": True},
    "coupled_head": {"decoupled_head": False},
    "conf_branch": {"with_confidence_branch": True},
    "loss_iou": {"loss_variant": "iou"},
    "loss_giou": {"loss_variant": "giou"},
}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_windows: int = 8
    seed: int = 0
    # training windows may be sampled more densely than the inference plan
    train_hop: Optional[int] = None
    balance: bool = True
    min_inside: float = 0.5
    network: NetworkConfig = field(default_factory=NetworkConfig)
    data: DatasetConfig = field(default_factory=DatasetConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)

    def validate(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be nonnegative")
        if self.epochs < 0 or self.batch_windows <= 0:
            raise ValueError("epochs must be >= 0 and batch_windows > 0")
        if self.network.d != self.data.feature_dim:
            raise ValueError(f"network d={self.network.d} does not match feature_dim={self.data.feature_dim}")
        if not self.network.spotting_only and self.network.num_classes != self.data.num_classes:
            raise ValueError("network num_classes does not match the dataset")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["network"] = self.network.to_dict()
        return out


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class TrainingWindows:
    """Training windows of a dataset with their slot assignments.

    Features are sliced lazily from ``dataset`` using ``video`` and ``start``.
    """

    dataset: Dataset
    plan_by_video: list[WindowPlan]
    video: np.ndarray
    start: np.ndarray
    has_event: np.ndarray
    assignments: list[AssignmentResult]

    def __len__(self):
        return len(self.video)

    def block(self, i: int) -> np.ndarray:
        v = int(self.video[i])
        return slice_window(self.dataset.features[v], int(self.start[i]), self.plan_by_video[v])


def window_ground_truth(annotation: VideoAnnotation, start: int, span: int, min_inside: float = 0.5):
    """Events expressed in window-normalized coordinates.

    An event is kept when at least ``min_inside`` of its length falls inside
    the window; its interval is then clipped to the window.
    """
    out = []
    for ev in annotation.events:
        lo, hi = max(ev.onset, start), min(ev.offset, start + span)
        if hi <= lo or (hi - lo) < min_inside * (ev.offset - ev.onset):
            continue
        out.append((Interval((lo - start) / span, (hi - start) / span), ev.category))
    return out


def make_training_batches(dataset: Dataset, cfg: NetworkConfig, overlap: int = 6,
                          hop: Optional[int] = None, min_inside: float = 0.5) -> TrainingWindows:
    table = cfg.anchor_table()
    plans, video, start, has_event, assignments = [], [], [], [], []
    for v, ann in enumerate(dataset.annotations):
        plan = plan_windows(ann.num_frames, cfg.s, cfg.f, overlap, hop)
        plans.append(plan)
        for st in plan.window_starts:
            gts = window_ground_truth(ann, st, plan.frames_per_window, min_inside)
            cats = [0 if cfg.spotting_only else c for _, c in gts]
            assignments.append(
                assign_targets(table, [g for g, _ in gts], cats, cfg.output_classes, cfg.pos_iou)
            )
            video.append(v)
            start.append(st)
            has_event.append(bool(gts))
    return TrainingWindows(dataset, plans, np.array(video), np.array(start), np.array(has_event), assignments)


def epoch_order(windows: TrainingWindows, rng: np.random.Generator, balance: bool = True) -> np.ndarray:
    """Window indices for one epoch: all event windows and as many background ones."""
    idx = np.arange(len(windows))
    if balance:
        events, background = idx[windows.has_event], idx[~windows.has_event]
        if len(events) and len(background) > len(events):
            background = rng.choice(background, size=len(events), replace=False)
        idx = np.concatenate([events, background])
    return rng.permutation(idx)


@dataclass
class RunManifest:
    config: dict
    seed: int
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    fold_reports: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "config": self.config,
            "seed": self.seed,
            "epoch_losses": self.epoch_losses,
            "step_losses": self.step_losses,
            "fold_reports": self.fold_reports,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out


def _batch_tensors(windows: TrainingWindows, idx, dtype):
    blocks = torch.as_tensor(np.stack([windows.block(i) for i in idx]), dtype=dtype)
    sel = [windows.assignments[i] for i in idx]
    positive = torch.as_tensor(np.stack([a.positive for a in sel]))
    target = torch.as_tensor(np.stack([a.category_target for a in sel]), dtype=dtype)
    bounds = torch.as_tensor(np.stack([a.gt_bounds for a in sel]), dtype=dtype)
    return blocks, positive, target, bounds


def train(config: TrainConfig, dataset: Dataset, model: Optional[FEDN] = None,
          max_steps: Optional[int] = None) -> tuple[FEDN, RunManifest]:
    """Fit a model on ``dataset``.

    Uses Adam with decoupled weight decay, a seeded initialization and a
    seeded window order, so the loss curve is reproducible for a fixed
    config.  ``max_steps`` caps the number of optimizer steps.
    """
    config.validate()
    tic = time.perf_counter()
    net = config.network
    model = model or build_model(net, config.seed)
    table: AnchorTable = net.anchor_table()
    windows = make_training_batches(dataset, net, config.detect.overlap, config.train_hop, config.min_inside)
    opt = torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng([config.seed, 7])
    dtype = next(model.parameters()).dtype
    manifest = RunManifest(config.to_dict(), config.seed)
    step = 0
    model.train()
    for epoch in range(config.epochs):
        order = epoch_order(windows, rng, config.balance)
        losses = []
        for b in range(0, len(order), config.batch_windows):
            blocks, positive, target, bounds = _batch_tensors(windows, order[b:b + config.batch_windows], dtype)
            raw = model(blocks)
            loss, _, _, _ = total_loss_tensor(raw, table, positive, target, bounds, net.alpha, net.beta, net.loss_variant)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(step, value)
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            losses.append(value)
            manifest.step_losses.append(value)
            if max_steps is not None and step >= max_steps:
                break
        manifest.epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))
        log.info("epoch %d: loss %.4f", epoch + 1, manifest.epoch_losses[-1])
        if max_steps is not None and step >= max_steps:
            break
    model.eval()
    manifest.wall_clock = time.perf_counter() - tic
    return model, manifest


def ground_truth(annotation: VideoAnnotation) -> list[GroundTruth]:
    return [GroundTruth(Interval(ev.onset, ev.offset), ev.category) for ev in annotation.events]


def detect_dataset(model: FEDN, dataset: Dataset, detect: DetectConfig) -> dict:
    return {a.video_id: detect_video(f, model, detect) for a, f in zip(dataset.annotations, dataset.features)}


def score_dataset(predictions: dict, dataset: Dataset, num_classes: int, spotting_only: bool = False,
                  name: str = "FEDN") -> EvalReport:
    gts = {a.video_id: ground_truth(a) for a in dataset.annotations}
    return evaluate(predictions, gts, num_classes, spotting_only, name)


@dataclass
class LosoResult:
    fold_reports: dict[str, EvalReport]
    pooled: EvalReport
    predictions: dict
    manifests: dict[str, RunManifest]


def loso(config: TrainConfig, dataset: Dataset, name: str = "FEDN") -> LosoResult:
    """Leave-one-subject-out: train without each subject, detect on its videos.

    The aggregate report scores all folds' predictions pooled together.
    """
    spotting_only = config.network.spotting_only
    fold_reports, manifests, pooled = {}, {}, {}
    for subject, train_idx, test_idx in loso_folds(dataset.annotations):
        model, manifest = train(config, dataset.subset(train_idx))
        held_out = dataset.subset(test_idx)
        preds = detect_dataset(model, held_out, config.detect)
        report = score_dataset(preds, held_out, config.data.num_classes, spotting_only, f"{name}[{subject}]")
        fold_reports[subject] = report
        manifests[subject] = manifest
        pooled.update(preds)
        log.info("fold %s: F1 %.3f", subject, report.spotting_f1)
    report = score_dataset(pooled, dataset, config.data.num_classes, spotting_only, name)
    return LosoResult(fold_reports, report, pooled, manifests)


def variant_config(config: TrainConfig, variant: str) -> TrainConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    net = dataclasses.replace(config.network, **VARIANTS[variant])
    return dataclasses.replace(config, network=net)


def ablate(config: TrainConfig, dataset: Dataset, variants: Sequence[str] = tuple(VARIANTS)) -> dict[str, EvalReport]:
    """Run LOSO for every variant with the same seed; one report per variant."""
    return {v: loso(variant_config(config, v), dataset, name=v).pooled for v in variants}


def ablation_table(reports: dict[str, EvalReport], fmt: str = "text_table") -> str:
    return render_reports(list(reports.values()), fmt)
