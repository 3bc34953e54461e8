"""Offline 3D multi-object tracking that turns frame-wise vehicle detections into refined pseudo-labels."""

from .config import FovConfig, PipelineConfig
from .data import Detection, EgoPose, Frame, PseudoLabel, SequenceLog
from .dreaming import dream, export_st_baseline
from .evaluation import ApReport, evaluate
from .geometry import BevBox, bev_iou, bev_nms
from .tracker import Tracker, run_online

__version__ = "0.1.0"

__all__ = [
    "ApReport",
    "BevBox",
    "Detection",
    "EgoPose",
    "FovConfig",
    "Frame",
    "PipelineConfig",
    "PseudoLabel",
    "SequenceLog",
    "Tracker",
    "bev_iou",
    "bev_nms",
    "dream",
    "evaluate",
    "export_st_baseline",
    "run_online",
]
