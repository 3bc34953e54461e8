"""Pipeline configuration with defaults and a JSON round-trip."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from .dynamics import DEFAULT_PROCESS_NOISE
from .filtering import EXTRAPOLATION_MEASUREMENT_NOISE, TRACK_MEASUREMENT_NOISE

DEFAULT_P0 = (2.0, 2.0, 0.1, 5.0, 0.5, 0.32)

_NOTES = {
    "r_track": "measurement variances (x m^2, y m^2, yaw rad^2, l m^2, w m^2) while tracking",
    "r_extrap": "looser measurement variances used when extrapolating against the candidate pool",
    "q": "process noise intensities (e_theta, e_s, e_vx, e_vy, e_wz, e_l, e_w), scaled by dt",
    "p0": "initial covariance diagonal (x, y, theta, s, l, w); speed starts at 0",
    "assoc_gate": "minimum BEV IoU for a track/detection match",
    "c_min_hits": "measurement updates needed to confirm a track",
    "c_max_age": "consecutive misses a track survives",
    "back_axle_fraction": "back axle sits this fraction of the length behind the box center",
    "track_input_score_min": "detections below this score are not fed to the tracker",
    "extrap_score_min": "pool candidates below this score are ignored (detector-specific scale)",
    "extrap_search_area_m2": "area of the square search window around an extrapolated prediction",
    "extrap_max_consecutive_misses": "extrapolation stops after this many frames without a candidate",
    "extrap_iou_min": "a pool candidate must exceed this BEV IoU with the prediction",
    "nms_iou": "labels overlapping a higher-priority label above this IoU are dropped",
    "st_score_min": "self-training baseline keeps detections scoring strictly above this",
    "fov": "forward sensor sector; tracks leaving it are ended",
}


@dataclass(frozen=True)
class FovConfig:
    max_range_m: float = 80.0
    half_angle_rad: float = math.pi / 4


@dataclass(frozen=True)
class PipelineConfig:
    r_track: tuple[float, ...] = TRACK_MEASUREMENT_NOISE
    r_extrap: tuple[float, ...] = EXTRAPOLATION_MEASUREMENT_NOISE
    q: tuple[float, ...] = DEFAULT_PROCESS_NOISE
    p0: tuple[float, ...] = DEFAULT_P0
    assoc_gate: float = 0.3
    c_min_hits: int = 3
    c_max_age: int = 3
    back_axle_fraction: float = 0.25
    track_input_score_min: float = 0.8
    extrap_score_min: float = 0.1
    extrap_search_area_m2: float = 3.0
    extrap_max_consecutive_misses: int = 3
    extrap_iou_min: float = 0.0
    nms_iou: float = 0.1
    st_score_min: float = 0.8
    fov: FovConfig = field(default_factory=FovConfig)

    def __post_init__(self) -> None:
        for name, size in (("r_track", 5), ("r_extrap", 5), ("q", 7), ("p0", 6)):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != size:
                raise ValueError(f"{name} needs {size} entries, got {len(vals)}")
            object.__setattr__(self, name, vals)
        if any(not v > 0 for v in self.r_track + self.r_extrap + self.p0):
            raise ValueError("r_track, r_extrap and p0 entries must be positive")
        if any(v < 0 for v in self.q):
            raise ValueError("q entries must be non-negative")
        for name in ("assoc_gate", "nms_iou", "extrap_iou_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.c_min_hits < 1 or self.c_max_age < 0 or self.extrap_max_consecutive_misses < 1:
            raise ValueError("lifecycle counts out of range")
        if not 0.0 <= self.back_axle_fraction < 0.5:
            raise ValueError("back_axle_fraction must lie in [0, 0.5)")
        if not self.extrap_search_area_m2 > 0:
            raise ValueError("extrap_search_area_m2 must be positive")
        if not (self.fov.max_range_m > 0 and 0 < self.fov.half_angle_rad <= math.pi):
            raise ValueError("invalid field of view")

    def to_dict(self, notes: bool = False) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, tuple):
                out[key] = list(val)
        if notes:
            out["_notes"] = dict(_NOTES)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"_notes"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k in known}
        if "fov" in kwargs and isinstance(kwargs["fov"], dict):
            kwargs["fov"] = FovConfig(**kwargs["fov"])
        for key in ("c_min_hits", "c_max_age", "extrap_max_consecutive_misses"):
            if key in kwargs:
                if int(kwargs[key]) != kwargs[key]:
                    raise ValueError(f"{key} must be an integer")
                kwargs[key] = int(kwargs[key])
        return cls(**kwargs)
