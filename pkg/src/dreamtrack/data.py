"""Plain records shared by the tracker, the refinement passes, the simulator and the file formats."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .geometry import BevBox, wrap_angle

SCHEMA_VERSION = 1

DETECTED = "detected"
MISSED = "missed"
SMOOTHED = "smoothed"
INTERPOLATED = "interpolated"
EXTRAPOLATED = "extrapolated"
GROUND_TRUTH = "ground_truth"
LABEL_SOURCES = (DETECTED, SMOOTHED, INTERPOLATED, EXTRAPOLATED, GROUND_TRUTH)


@dataclass(frozen=True)
class Detection:
    """One detector output in the ego frame. ``cz``/``h`` are carried through untouched."""

    cx: float
    cy: float
    cz: float
    yaw: float
    l: float
    w: float
    h: float
    score: float

    def __post_init__(self) -> None:
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"detection extents must be positive: l={self.l} w={self.w} h={self.h}")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def box(self) -> BevBox:
        return BevBox(self.cx, self.cy, self.yaw, self.l, self.w)

    @property
    def measurement(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.yaw, self.l, self.w)


@dataclass(frozen=True)
class EgoPose:
    x: float
    y: float
    yaw: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass
class Frame:
    frame_index: int
    timestamp: float
    ego_pose: EgoPose
    detections: list[Detection] = field(default_factory=list)
    # Low-threshold detector dump used for extrapolation; None when not recorded.
    pool_detections: Optional[list[Detection]] = None


@dataclass
class SequenceLog:
    sequence_id: str
    frames: list[Frame] = field(default_factory=list)

    def validate(self) -> None:
        for prev, cur in zip(self.frames, self.frames[1:]):
            if not cur.timestamp > prev.timestamp:
                raise ValueError(
                    f"frame {cur.frame_index}: timestamp {cur.timestamp} does not increase "
                    f"(previous {prev.timestamp})"
                )


@dataclass(frozen=True)
class PseudoLabel:
    frame_index: int
    track_id: int
    cx: float
    cy: float
    cz: float
    yaw: float
    l: float
    w: float
    h: float
    score: float
    source: str

    def __post_init__(self) -> None:
        if self.source not in LABEL_SOURCES:
            raise ValueError(f"unknown label source {self.source!r}")
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError("label extents must be positive")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def box(self) -> BevBox:
        return BevBox(self.cx, self.cy, self.yaw, self.l, self.w)
