"""Joint spotting and recognition of expressions in long feature sequences."""

from .geometry import Interval, ScoredDetection, diou, giou, iou, match_greedy, nms
from .network import FEDN, NetworkConfig, build_model, load_checkpoint, save_checkpoint
from .synthetic import Dataset, DatasetConfig

__version__ = "0.1.0"

__all__ = [
    "FEDN", "Dataset", "DatasetConfig", "Interval", "NetworkConfig", "ScoredDetection",
    "build_model", "diou", "giou", "iou", "load_checkpoint", "match_greedy", "nms", "save_checkpoint",
]
