"""The detection network: backbone, temporal pyramid neck and per-level heads.

Input is a batch of window feature blocks ``(B, s, f, d)``; output holds,
for every pyramid position and each of its six slots, two interval
parameters and ``C`` category logits.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .anchors import DEFAULT_SCALES, NUM_SLOTS, AnchorTable, PyramidLayout

LOSS_VARIANTS = ("diou", "giou", "iou")


@dataclass
class NetworkConfig:
    s: int = 64
    f: int = 8
    d: int = 512
    d1: int = 512
    d2: int = 256
    num_classes: int = 4
    attention_heads: int = 8
    use_segment_attention: bool = True
    use_window_attention: bool = True
    decoupled_head: bool = True
    with_confidence_branch: bool = False
    spotting_only: bool = False
    loss_variant: str = "diou"
    alpha: float = 1.0
    beta: float = 2.0
    scale_multipliers: tuple[float, ...] = DEFAULT_SCALES
    pos_iou: float = 0.5

    def __post_init__(self):
        self.scale_multipliers = tuple(float(v) for v in self.scale_multipliers)
        self.validate()

    def validate(self):
        if self.s <= 0 or self.s % 32:
            raise ValueError(f"s must be a positive multiple of 32, got {self.s}")
        for name in ("f", "d", "d1", "d2", "num_classes", "attention_heads"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d % self.attention_heads or self.d1 % self.attention_heads:
            raise ValueError("attention_heads must divide both d and d1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")

    @property
    def output_classes(self) -> int:
        """Width of the recognition output; one objectness score when spotting only."""
        return 1 if self.spotting_only else self.num_classes

    @property
    def layout(self) -> PyramidLayout:
        return PyramidLayout(self.s)

    def anchor_table(self) -> AnchorTable:
        return AnchorTable.build(self.layout, self.scale_multipliers)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["scale_multipliers"] = list(self.scale_multipliers)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        return cls(**data)


class ConvBlock(nn.Module):
    """Conv1d, then ReLU, then LayerNorm over channels.  Works on ``(B, C, L)``."""

    def __init__(self, in_dim, out_dim, stride=1):
        super().__init__()
        self.conv = nn.Conv1d(in_dim, out_dim, 3, stride=stride, padding=1)
        self.norm = nn.LayerNorm(out_dim)

    def forward(self, x):
        x = F.relu(self.conv(x))
        return self.norm(x.transpose(1, 2)).transpose(1, 2)


class SegmentAttentionFusion(nn.Module):
    """Collapse the ``f`` frames of every segment into one vector.

    A per-segment global vector (self-attention, then mean over frames) is
    appended to every frame; one linear layer scores each frame, another
    projects it back to ``d``, and the projections are summed with
    softmax(score) weights.
    """

    def __init__(self, d, heads):
        super().__init__()
        self.attn = nn.MultiheadAttention(d, heads, batch_first=True)
        self.score = nn.Linear(2 * d, 1)
        self.value = nn.Linear(2 * d, d)
        self.last_scores: Optional[torch.Tensor] = None

    def forward(self, block):
        b, s, f, d = block.shape
        frames = block.reshape(b * s, f, d)
        ctx, _ = self.attn(frames, frames, frames, need_weights=False)
        glob = ctx.mean(dim=1, keepdim=True).expand(-1, f, -1)
        joined = torch.cat([frames, glob], dim=-1)
        weights = torch.softmax(self.score(joined).squeeze(-1), dim=-1)
        self.last_scores = weights.detach().reshape(b, s, f)
        out = (weights.unsqueeze(-1) * self.value(joined)).sum(dim=1)
        return out.reshape(b, s, d)


class MeanFusion(nn.Module):
    def forward(self, block):
        return block.mean(dim=2)


class SlidingWindowAttention(nn.Module):
    """Reweight the ``s`` segment vectors by a softmax over positions.

    Rows are multiplied by ``s * score`` so that uniform scores leave the
    input unchanged.
    """

    def __init__(self, d):
        super().__init__()
        self.conv = nn.Conv1d(d, 1, 3, padding=1)
        self.last_scores: Optional[torch.Tensor] = None

    def forward(self, seq):
        s = seq.shape[1]
        scores = torch.softmax(self.conv(seq.transpose(1, 2)).squeeze(1), dim=-1)
        self.last_scores = scores.detach()
        return seq * (s * scores).unsqueeze(-1)


class Backbone(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.fusion = SegmentAttentionFusion(cfg.d, cfg.attention_heads) if cfg.use_segment_attention else MeanFusion()
        self.window_attn = SlidingWindowAttention(cfg.d) if cfg.use_window_attention else nn.Identity()
        self.conv1 = ConvBlock(cfg.d, cfg.d1, stride=2)
        self.conv2 = ConvBlock(cfg.d1, cfg.d1, stride=2)

    def forward(self, block):
        """Return the intermediate tensors ``(s, d)``, ``(s/2, d1)``, ``(s/4, d1)``."""
        fused = self.window_attn(self.fusion(block))
        half = self.conv1(fused.transpose(1, 2))
        quarter = self.conv2(half)
        return fused, half, quarter


class Neck(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.down = nn.ModuleList([ConvBlock(cfg.d1, cfg.d1, stride=2) for _ in range(3)])

    def forward(self, x):
        levels = [x]
        for block in self.down:
            levels.append(block(levels[-1]))
        return levels


class Head(nn.Module):
    """One pyramid level's head: attention, a conv trunk to ``d2``, then outputs.

    Output projections are per-slot (one set of output channels per slot),
    while the trunk is shared by the six slots.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        c = cfg.output_classes
        self.num_classes = c
        self.decoupled = cfg.decoupled_head
        self.with_confidence = cfg.with_confidence_branch
        self.attn = nn.MultiheadAttention(cfg.d1, cfg.attention_heads, batch_first=True)
        self.attn_norm = nn.LayerNorm(cfg.d1)
        self.trunk = ConvBlock(cfg.d1, cfg.d2)
        if self.decoupled:
            self.reg_branch = ConvBlock(cfg.d2, cfg.d2)
            self.cls_branch = ConvBlock(cfg.d2, cfg.d2)
            self.reg_out = nn.Conv1d(cfg.d2, NUM_SLOTS * 2, 3, padding=1)
            self.cls_out = nn.Conv1d(cfg.d2, NUM_SLOTS * c, 3, padding=1)
        else:
            self.shared_branch = ConvBlock(cfg.d2, cfg.d2)
            self.joint_out = nn.Conv1d(cfg.d2, NUM_SLOTS * (2 + c), 3, padding=1)
        if self.with_confidence:
            self.conf_out = nn.Conv1d(cfg.d2, NUM_SLOTS, 3, padding=1)

    def forward(self, x):
        # x: (B, d1, l)
        seq = x.transpose(1, 2)
        ctx, _ = self.attn(seq, seq, seq, need_weights=False)
        seq = self.attn_norm(seq + ctx)
        h = self.trunk(seq.transpose(1, 2))
        b, _, length = h.shape
        if self.decoupled:
            cls_feat = self.cls_branch(h)
            reg = self.reg_out(self.reg_branch(h))
            cls = self.cls_out(cls_feat)
        else:
            cls_feat = self.shared_branch(h)
            joint = self.joint_out(cls_feat)
            reg, cls = joint.split([NUM_SLOTS * 2, NUM_SLOTS * self.num_classes], dim=1)
        reg = reg.transpose(1, 2).reshape(b, length, NUM_SLOTS, 2)
        cls = cls.transpose(1, 2).reshape(b, length, NUM_SLOTS, self.num_classes)
        conf = None
        if self.with_confidence:
            conf = self.conf_out(cls_feat).transpose(1, 2)
        return reg, cls, conf


@dataclass
class RawWindowPrediction:
    """Network output for a batch of windows.

    ``interval`` is ``(B, P, 6, 2)``: ``(ys, ye)`` for slot 0 and ``(dc, dl)``
    for slots 1-5.  ``logits`` is ``(B, P, 6, C)``; ``confidence`` is
    ``(B, P, 6)`` or None.  ``P`` concatenates the pyramid levels, finest
    first.
    """

    interval: torch.Tensor
    logits: torch.Tensor
    confidence: Optional[torch.Tensor]
    level_lengths: tuple[int, ...]


class FEDN(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg)
        self.neck = Neck(cfg)
        self.heads = nn.ModuleList([Head(cfg) for _ in cfg.layout.level_lengths])
        table = cfg.anchor_table()
        # anchor-free slots regress (ys, ye) around their cell
        self.register_buffer("cell_centers", torch.tensor(table.centers[:, 0]), persistent=False)
        self.register_buffer("cell_widths", torch.tensor(table.cells[:, 0]), persistent=False)
        self.last_shapes: dict[str, tuple[int, ...]] = {}

    def forward(self, block: torch.Tensor) -> RawWindowPrediction:
        cfg = self.cfg
        if block.dim() == 3:
            block = block.unsqueeze(0)
        if tuple(block.shape[1:]) != (cfg.s, cfg.f, cfg.d):
            raise ValueError(f"expected windows of shape (B, {cfg.s}, {cfg.f}, {cfg.d}), got {tuple(block.shape)}")
        fused, half, quarter = self.backbone(block)
        levels = self.neck(quarter)
        outs = [head(level) for head, level in zip(self.heads, levels)]
        self.last_shapes = {
            "window": tuple(block.shape[1:]),
            "fused": tuple(fused.shape[1:]),
            "conv1": tuple(half.transpose(1, 2).shape[1:]),
            "conv2": tuple(quarter.transpose(1, 2).shape[1:]),
        }
        for i, level in enumerate(levels):
            self.last_shapes[f"level{i}"] = tuple(level.transpose(1, 2).shape[1:])

        reg = torch.cat([o[0] for o in outs], dim=1)
        cls = torch.cat([o[1] for o in outs], dim=1)
        conf = torch.cat([o[2] for o in outs], dim=1) if cfg.with_confidence_branch else None

        centers = self.cell_centers.to(reg.dtype)[None, :, None]
        widths = self.cell_widths.to(reg.dtype)[None, :, None]
        free = torch.cat(
            [centers + widths * (reg[:, :, 0, 0:1] - 0.5), centers + widths * (reg[:, :, 0, 1:2] + 0.5)], dim=-1
        )
        reg = torch.cat([free.unsqueeze(2), reg[:, :, 1:]], dim=2)
        return RawWindowPrediction(reg, cls, conf, tuple(o[0].shape[1] for o in outs))


def build_model(cfg: NetworkConfig, seed: int = 0) -> FEDN:
    torch.manual_seed(seed)
    return FEDN(cfg)


# -- checkpoints ------------------------------------------------------------

CHECKPOINT_MAGIC = b"FEDNCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: FEDN, path, extra: dict | None = None) -> None:
    """Write parameters plus config to a versioned, self-describing file.

    Layout: 8-byte magic, uint32 version, uint32 header length, a JSON header
    (config, extra metadata, and name/shape/offset per tensor), then the raw
    little-endian float32 tensor data.
    """
    state = model.state_dict()
    entries, chunks, offset = [], [], 0
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name].detach().cpu().numpy(), dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps(
        {"config": model.cfg.to_dict(), "extra": extra or {}, "tensors": entries}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[FEDN, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen])
    body = raw[16 + hlen:]
    model = FEDN(NetworkConfig.from_dict(header["config"]))
    state = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=e["offset"]).reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.astype(np.float32))
    model.load_state_dict(state)
    model.eval()
    return model, header["extra"]
