"""Experiment config files: INI-style ``key = value`` lines grouped in sections.

Sections are ``[train]``, ``[network]``, ``[data]`` and ``[detect]``.  Any
field can be overridden with ``section.key=value`` strings, which is what
the command line's ``--set`` passes through.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Iterable

from .network import NetworkConfig
from .pipeline import DetectConfig
from .synthetic import DatasetConfig
from .training import TrainConfig

SECTIONS = ("train", "network", "data", "detect")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(text: str, current):
    text = text.strip()
    if isinstance(current, bool):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        parts = [p for p in text.replace(",", " ").split() if p]
        kind = type(current[0]) if current else float
        return tuple(kind(p) for p in parts)
    if current is None:
        return None if text.lower() in ("", "none") else int(text)
    return text


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def _parts(cfg: TrainConfig) -> dict:
    return {"train": cfg, "network": cfg.network, "data": cfg.data, "detect": cfg.detect}


def _scalar_fields(obj):
    return [f.name for f in dataclasses.fields(obj) if not dataclasses.is_dataclass(getattr(obj, f.name))]


def apply_setting(cfg: TrainConfig, key: str, value: str) -> TrainConfig:
    section, _, name = key.partition(".")
    if not name:
        section, name = "train", section
    parts = _parts(cfg)
    if section not in parts:
        raise ValueError(f"unknown config section {section!r}")
    target = parts[section]
    if name not in _scalar_fields(target):
        raise ValueError(f"unknown config key {section}.{name}")
    try:
        parsed = _parse_value(value, getattr(target, name))
    except ValueError as exc:
        raise ValueError(f"{section}.{name}: {exc}") from None
    updated = dataclasses.replace(target, **{name: parsed})
    if section == "train":
        return updated
    return dataclasses.replace(cfg, **{section: updated})


def load_config(path=None, overrides: Iterable[str] = ()) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string(text, source=str(path))
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg = apply_setting(cfg, f"{section}.{key}", value)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form key=value")
        cfg = apply_setting(cfg, key.strip(), value)
    cfg.network.validate()
    cfg.data.validate()
    return cfg


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for section, obj in _parts(cfg).items():
        lines.append(f"[{section}]")
        for name in _scalar_fields(obj):
            lines.append(f"{name} = {_format_value(getattr(obj, name))}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


def tiny_config(seed: int = 0) -> TrainConfig:
    """Desk-scale preset used by the demos and the end-to-end checks."""
    data = DatasetConfig(num_subjects=4, videos_per_subject=2, snr=8.0, feature_dim=64, seed=seed)
    net = NetworkConfig(s=64, f=8, d=64, d1=32, d2=16, num_classes=4, attention_heads=4)
    return TrainConfig(learning_rate=1e-3, epochs=10, batch_windows=8, seed=seed, train_hop=8,
                       network=net, data=data, detect=DetectConfig())
