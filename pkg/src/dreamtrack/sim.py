"""Synthetic driving scenarios with ground truth and a detector-like sensor model.

Vehicles move at constant speed and heading in the world frame while the ego
follows a straight line or a constant-curvature arc. The sensor turns each
visible vehicle into a noisy detection with a range-dependent detection
probability, noise level, score and size bias. A second, deeper-reaching
low-score tier fills the candidate pool used for extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .data import GROUND_TRUTH, Detection, EgoPose, Frame, PseudoLabel, SequenceLog
from .geometry import wrap_angle


def logistic_falloff(r: float, midpoint: float, slope: float) -> float:
    """1 at short range, 0.5 at ``midpoint``, decaying over a width of ``slope`` metres."""
    z = (r - midpoint) / slope
    if z > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


@dataclass(frozen=True)
class SensorModel:
    fov_half_angle: float = math.radians(35.0)
    max_range: float = 100.0
    r50: float = 50.0
    slope: float = 4.0
    pool_r50: float = 80.0
    pool_slope: float = 2.0
    # noise std for (x, y, yaw, l, w) is sigma0 + sigma_per_m * range
    sigma0: tuple[float, ...] = (0.05, 0.05, 0.02, 0.05, 0.03)
    sigma_per_m: tuple[float, ...] = (0.004, 0.004, 0.0005, 0.002, 0.001)
    size_bias: float = 0.12
    size_bias_start: float = 30.0
    size_bias_full: float = 70.0
    score_min: float = 0.8
    pool_score_min: float = 0.1
    score_noise: float = 0.03
    dropout: float = 0.0
    flip_prob: float = 0.0
    clutter_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("sigma0", "sigma_per_m"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 5 or any(v < 0 for v in vals):
                raise ValueError(f"{name} needs 5 non-negative entries")
            object.__setattr__(self, name, vals)
        for name in ("dropout", "flip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.slope <= 0 or self.pool_slope <= 0:
            raise ValueError("logistic slopes must be positive")

    def detect_prob(self, r: float) -> float:
        return logistic_falloff(r, self.r50, self.slope)

    def pool_prob(self, r: float) -> float:
        return logistic_falloff(r, self.pool_r50, self.pool_slope)

    def sigma(self, r: float) -> np.ndarray:
        return np.asarray(self.sigma0) + np.asarray(self.sigma_per_m) * r

    def size_factor(self, r: float) -> float:
        if self.size_bias_full <= self.size_bias_start:
            return 1.0 + (self.size_bias if r >= self.size_bias_start else 0.0)
        t = (r - self.size_bias_start) / (self.size_bias_full - self.size_bias_start)
        return 1.0 + self.size_bias * min(max(t, 0.0), 1.0)

    def sees(self, cx: float, cy: float) -> bool:
        return math.hypot(cx, cy) <= self.max_range and abs(math.atan2(cy, cx)) <= self.fov_half_angle

    def observe(self, rng: np.random.Generator, gt: PseudoLabel) -> tuple[Optional[Detection], Optional[Detection]]:
        """Sample ``(detection, pool_detection)`` for one ground-truth box.

        A detection (score >= ``score_min``) is always also a pool entry; a
        missed object may still produce a low-score pool entry.
        """
        r = math.hypot(gt.cx, gt.cy)
        u_det, u_drop, u_pool, u_flip, u_score = rng.random(5)
        noise = rng.standard_normal(6)
        detected = u_det < self.detect_prob(r) and u_drop >= self.dropout
        pooled = detected or u_pool < self.pool_prob(r)
        if not pooled:
            return None, None
        sig = self.sigma(r)
        grow = self.size_factor(r)
        yaw = gt.yaw + sig[2] * noise[2] + (math.pi if u_flip < self.flip_prob else 0.0)
        l = max(gt.l * grow + sig[3] * noise[3], 0.5)
        w = max(gt.w * grow + sig[4] * noise[4], 0.3)
        if detected:
            q = min(max(1.0 - r / 100.0 + self.score_noise * noise[5], 0.0), 1.0)
            score = self.score_min + (1.0 - self.score_min) * q
        else:
            score = self.pool_score_min + (self.score_min - self.pool_score_min) * u_score * 0.999
        det = Detection(
            gt.cx + sig[0] * noise[0], gt.cy + sig[1] * noise[1], gt.cz, yaw, l, w, gt.h, score
        )
        return (det if detected else None), det


@dataclass(frozen=True)
class VehicleSpec:
    """World-frame start pose of the box center, constant speed/heading, and true size."""

    x: float
    y: float
    heading: float
    speed: float
    length: float = 4.5
    width: float = 1.85
    height: float = 1.55
    z: float = 0.0

    def __post_init__(self) -> None:
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise ValueError("vehicle extents must be positive")


@dataclass(frozen=True)
class EgoPathSpec:
    """Straight line (``yaw_rate`` 0) or constant-curvature arc."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    speed: float = 10.0
    yaw_rate: float = 0.0

    def pose(self, t: float) -> tuple[float, float, float]:
        v, w = self.speed, self.yaw_rate
        if abs(w) < 1e-12:
            return (self.x + v * t * math.cos(self.yaw), self.y + v * t * math.sin(self.yaw), self.yaw)
        yaw = self.yaw + w * t
        return (
            self.x + v / w * (math.sin(yaw) - math.sin(self.yaw)),
            self.y - v / w * (math.cos(yaw) - math.cos(self.yaw)),
            yaw,
        )


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    num_frames: int = 200
    frame_rate: float = 10.0
    ego: EgoPathSpec = field(default_factory=EgoPathSpec)
    vehicles: tuple[VehicleSpec, ...] = ()
    sensor: SensorModel = field(default_factory=SensorModel)
    sequence_id: str = "sim"

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "vehicles", tuple(self.vehicles))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["vehicles"] = [asdict(v) for v in self.vehicles]
        out["sensor"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in out["sensor"].items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "ego" in kwargs:
            kwargs["ego"] = EgoPathSpec(**kwargs["ego"])
        if "sensor" in kwargs:
            kwargs["sensor"] = SensorModel(**kwargs["sensor"])
        if "vehicles" in kwargs:
            kwargs["vehicles"] = tuple(VehicleSpec(**v) for v in kwargs["vehicles"])
        return cls(**kwargs)


def vehicle_center(v: VehicleSpec, t: float) -> tuple[float, float]:
    return (v.x + v.speed * t * math.cos(v.heading), v.y + v.speed * t * math.sin(v.heading))


def to_ego(pose: tuple[float, float, float], x: float, y: float, heading: float) -> tuple[float, float, float]:
    ex, ey, eyaw = pose
    c, s = math.cos(eyaw), math.sin(eyaw)
    dx, dy = x - ex, y - ey
    return (c * dx + s * dy, -s * dx + c * dy, wrap_angle(heading - eyaw))


def ground_truth_states(spec: ScenarioSpec, back_axle_fraction: float = 0.25) -> list[list[np.ndarray]]:
    """Exact ego-relative ``[x, y, theta, s, l, w]`` back-axle states, per frame and vehicle."""
    out = []
    for k in range(spec.num_frames):
        t = k / spec.frame_rate
        pose = spec.ego.pose(t)
        row = []
        for v in spec.vehicles:
            cx, cy = vehicle_center(v, t)
            rx, ry, ryaw = to_ego(pose, cx, cy, v.heading)
            off = back_axle_fraction * v.length
            row.append(np.array([rx - off * math.cos(ryaw), ry - off * math.sin(ryaw), ryaw, v.speed, v.length, v.width]))
        out.append(row)
    return out


def generate(spec: ScenarioSpec) -> tuple[SequenceLog, dict[int, list[PseudoLabel]]]:
    """Sample one sequence.

    Returns the sequence log (detections plus candidate pool) and the
    ground-truth labels per frame; only vehicles inside the sensor field of
    view are labelled. Deterministic for a given spec.
    """
    if spec.num_frames < 1:
        raise ValueError("scenario needs at least one frame")
    if not spec.vehicles:
        raise ValueError("scenario needs at least one vehicle")
    rng = np.random.default_rng(spec.seed)
    sensor = spec.sensor
    frames, gt = [], {}
    for k in range(spec.num_frames):
        t = k / spec.frame_rate
        pose = spec.ego.pose(t)
        labels, dets, pool = [], [], []
        for vid, v in enumerate(spec.vehicles):
            cx, cy = vehicle_center(v, t)
            rx, ry, ryaw = to_ego(pose, cx, cy, v.heading)
            if not sensor.sees(rx, ry):
                continue
            lab = PseudoLabel(k, vid, rx, ry, v.z + 0.5 * v.height, ryaw, v.length, v.width, v.height, 1.0, GROUND_TRUTH)
            labels.append(lab)
            det, pooled = sensor.observe(rng, lab)
            if det is not None:
                dets.append(det)
            if pooled is not None:
                pool.append(pooled)
        pool.extend(_clutter(rng, sensor))
        gt[k] = labels
        frames.append(Frame(k, round(t, 9), EgoPose(*pose), dets, pool))
    return SequenceLog(spec.sequence_id, frames), gt


def _clutter(rng: np.random.Generator, sensor: SensorModel) -> list[Detection]:
    n = int(rng.poisson(sensor.clutter_rate)) if sensor.clutter_rate > 0 else 0
    out = []
    for _ in range(n):
        r = sensor.max_range * math.sqrt(rng.random())
        a = (2.0 * rng.random() - 1.0) * sensor.fov_half_angle
        score = sensor.pool_score_min + (sensor.score_min - sensor.pool_score_min) * rng.random() * 0.999
        out.append(
            Detection(r * math.cos(a), r * math.sin(a), 0.8, rng.uniform(-math.pi, math.pi), rng.uniform(3.5, 5.0), rng.uniform(1.6, 2.0), 1.5, score)
        )
    return out


def traffic_scenario(
    seed: int,
    num_frames: int = 200,
    frame_rate: float = 10.0,
    num_vehicles: int = 8,
    sensor: SensorModel | None = None,
    ego_speed: float = 12.0,
) -> ScenarioSpec:
    """Random multi-lane traffic on a straight road around a moving ego.

    Two same-direction lanes (the ego lane and its right neighbour) and two
    oncoming lanes. Vehicles in a lane share a speed and keep a minimum gap so
    boxes never overlap. Placement is chosen so most vehicles cross the
    sensor's field of view during the sequence.
    """
    rng = np.random.default_rng(seed)
    duration = num_frames / frame_rate
    travel = ego_speed * duration
    oncoming_far = max(travel + 0.6 * 20.0 * duration, 90.0)
    lanes = [
        # (lateral offset, heading, speed range, start-x range)
        (0.0, 0.0, (ego_speed + 2.0, ego_speed + 6.0), (15.0, 60.0)),
        (-3.5, 0.0, (ego_speed - 6.0, ego_speed + 6.0), (-20.0, 90.0)),
        (3.5, math.pi, (8.0, 14.0), (30.0, oncoming_far)),
        (7.0, math.pi, (8.0, 14.0), (30.0, oncoming_far)),
    ]
    speeds = [rng.uniform(*lane[2]) for lane in lanes]
    placed: list[list[float]] = [[] for _ in lanes]
    vehicles = []
    attempts = 0
    while len(vehicles) < num_vehicles:
        attempts += 1
        if attempts > 1000 * num_vehicles:
            raise ValueError(f"cannot place {num_vehicles} vehicles with the required spacing")
        li = int(rng.integers(len(lanes)))
        y, heading, _, (lo, hi) = lanes[li]
        x = rng.uniform(lo, hi)
        if any(abs(x - other) < 12.0 for other in placed[li]):
            continue
        placed[li].append(x)
        vehicles.append(
            VehicleSpec(
                x=x,
                y=y + rng.normal(0.0, 0.2),
                heading=heading,
                speed=speeds[li],
                length=rng.uniform(3.9, 5.0),
                width=rng.uniform(1.7, 2.0),
                height=rng.uniform(1.4, 1.7),
            )
        )
    return ScenarioSpec(
        seed=seed,
        num_frames=num_frames,
        frame_rate=frame_rate,
        ego=EgoPathSpec(speed=ego_speed),
        vehicles=tuple(vehicles),
        sensor=sensor or SensorModel(),
        sequence_id=f"traffic_{seed:04d}",
    )
