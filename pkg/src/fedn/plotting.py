"""Loss curves and AP-vs-IoU figures."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_loss_curve(epoch_losses: Sequence[float], path, step_losses: Sequence[float] | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if step_losses:
        n_epochs = max(len(epoch_losses), 1)
        per = len(step_losses) / n_epochs
        ax.plot([i / per for i in range(len(step_losses))], step_losses, lw=0.6, alpha=0.4, label="step")
    ax.plot(range(1, len(epoch_losses) + 1), epoch_losses, marker="o", label="epoch mean")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_ap_vs_iou(curves: Mapping[str, Mapping[float, float]], path, title: str) -> Path:
    """One line per named run; x is the IoU threshold, y the AP there."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, ap in curves.items():
        ts = sorted(ap)
        ax.plot(ts, [ap[t] for t in ts], marker="o", label=name)
    ax.set_xlabel("IoU threshold")
    ax.set_ylabel("AP")
    ax.set_xlim(0.48, 0.97)
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
