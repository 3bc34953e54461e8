"""Online tracking-by-detection: predict, associate, update, and manage track birth/death."""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .association import associate
from .config import FovConfig, PipelineConfig
from .data import DETECTED, EXTRAPOLATED, MISSED, Detection, Frame, PseudoLabel, SequenceLog
from .dynamics import X, Y, EgoMotion, ProcessNoise, ego_motion_from_poses
from .filtering import (
    DegenerateUpdateError,
    FilterHistory,
    MeasurementNoise,
    measurement_model,
    predict,
    state_from_measurement,
    update,
)
from .geometry import BevBox

log = logging.getLogger(__name__)


def in_fov(state, fov: FovConfig) -> bool:
    x, y = float(state[X]), float(state[Y])
    return math.hypot(x, y) <= fov.max_range_m and abs(math.atan2(y, x)) <= fov.half_angle_rad


def state_box(state, back_axle_fraction: float = 0.25) -> BevBox:
    cx, cy, yaw, l, w = measurement_model(state, back_axle_fraction)
    return BevBox(cx, cy, yaw, l, w)


@dataclass
class FrameRecord:
    frame_index: int
    source: str  # DETECTED or MISSED
    detection: Optional[Detection] = None


@dataclass
class Track:
    id: int
    history: FilterHistory = field(default_factory=FilterHistory)
    records: list[FrameRecord] = field(default_factory=list)
    hit_count: int = 0
    miss_streak: int = 0
    confirmed: bool = False
    alive: bool = True
    degenerate: bool = False

    @property
    def frames(self) -> list[int]:
        return [r.frame_index for r in self.records]

    @property
    def detections(self) -> list[Detection]:
        return [r.detection for r in self.records if r.detection is not None]

    @property
    def state(self) -> np.ndarray:
        return self.history.posteriors[-1]

    @property
    def cov(self) -> np.ndarray:
        return self.history.post_covs[-1]

    def mean_score(self) -> float:
        dets = self.detections
        return statistics.fmean(d.score for d in dets) if dets else 0.0

    def median_height(self) -> tuple[float, float]:
        """Median ``(cz, h)`` of the matched detections."""
        dets = self.detections
        if not dets:
            return 0.0, 1.5
        return statistics.median(d.cz for d in dets), statistics.median(d.h for d in dets)


class Tracker:
    """One tracker per sequence. Feed frames in time order through :meth:`step`."""

    def __init__(self, cfg: PipelineConfig | None = None):
        self.cfg = cfg or PipelineConfig()
        self._q = ProcessNoise(self.cfg.q)
        self._r = MeasurementNoise(self.cfg.r_track)
        self._p0 = np.diag(self.cfg.p0)
        self.live: list[Track] = []
        self.tracks: list[Track] = []
        self._next_id = 0
        self._last_time: Optional[float] = None
        self._last_pose = None

    def process(self, frame: Frame) -> list[PseudoLabel]:
        """Step with the frame's detections, deriving ego motion from consecutive poses."""
        ego = None
        if self._last_pose is not None:
            dt = frame.timestamp - self._last_time
            if not dt > 0:
                raise ValueError(f"frame {frame.frame_index}: timestamp does not increase")
            ego = ego_motion_from_poses(self._last_pose, frame.ego_pose.as_tuple(), dt)
        dets = [d for d in frame.detections if d.score >= self.cfg.track_input_score_min]
        out = self.step(frame.frame_index, frame.timestamp, dets, ego)
        self._last_pose = frame.ego_pose.as_tuple()
        return out

    def step(
        self,
        frame_index: int,
        timestamp: float,
        detections: Sequence[Detection],
        ego: Optional[EgoMotion],
    ) -> list[PseudoLabel]:
        """Advance all live tracks one frame and return the confirmed-track outputs for it."""
        cfg = self.cfg
        if self._last_time is not None:
            if not timestamp > self._last_time:
                raise ValueError(f"frame {frame_index}: timestamp {timestamp} does not increase")
            if ego is None:
                raise ValueError("ego motion is required after the first frame")
        self._last_time = timestamp

        for track in self.live:
            prior, prior_cov, F = predict(track.state, track.cov, ego, self._q)
            track.history.add_prediction(prior, prior_cov, F, ego)

        boxes = [state_box(t.history.priors[-1], cfg.back_axle_fraction) for t in self.live]
        result = associate(boxes, [d.box for d in detections], cfg.assoc_gate)

        matched = {i: j for i, j, _ in result.matches}
        for i, track in enumerate(self.live):
            prior, prior_cov = track.history.priors[-1], track.history.prior_covs[-1]
            det = detections[matched[i]] if i in matched else None
            if det is not None:
                try:
                    post, post_cov, _ = update(prior, prior_cov, det.measurement, self._r, cfg.back_axle_fraction)
                except DegenerateUpdateError:
                    log.warning("track %d: degenerate update at frame %d, ending track", track.id, frame_index)
                    track.degenerate = True
                    det = None
            if det is not None:
                track.history.add_posterior(post, post_cov)
                track.records.append(FrameRecord(frame_index, DETECTED, det))
                track.hit_count += 1
                track.miss_streak = 0
                if track.hit_count >= cfg.c_min_hits:
                    track.confirmed = True
            else:
                track.history.add_posterior(prior, prior_cov)
                track.records.append(FrameRecord(frame_index, MISSED))
                track.miss_streak += 1

        for j in result.unmatched_detections:
            self._spawn(frame_index, detections[j])

        outputs = []
        survivors = []
        for track in self.live:
            if track.degenerate or track.miss_streak > cfg.c_max_age or not in_fov(track.state, cfg.fov):
                track.alive = False
                continue
            survivors.append(track)
            if track.confirmed:
                outputs.append(self._online_label(track, frame_index))
        self.live = survivors
        return outputs

    def _spawn(self, frame_index: int, det: Detection) -> None:
        track = Track(id=self._next_id)
        self._next_id += 1
        state = state_from_measurement(det.measurement, self.cfg.back_axle_fraction)
        track.history.start(state, self._p0.copy())
        track.records.append(FrameRecord(frame_index, DETECTED, det))
        track.hit_count = 1
        track.confirmed = track.hit_count >= self.cfg.c_min_hits
        self.live.append(track)
        self.tracks.append(track)

    def _online_label(self, track: Track, frame_index: int) -> PseudoLabel:
        rec = track.records[-1]
        box = state_box(track.state, self.cfg.back_axle_fraction)
        if rec.detection is not None:
            cz, h, score, source = rec.detection.cz, rec.detection.h, rec.detection.score, DETECTED
        else:
            (cz, h), score, source = track.median_height(), track.mean_score(), EXTRAPOLATED
        return PseudoLabel(frame_index, track.id, box.cx, box.cy, cz, box.yaw, box.length, box.width, h, score, source)


def run_online(seq: SequenceLog, cfg: PipelineConfig | None = None) -> tuple[list[Track], dict[int, list[PseudoLabel]]]:
    """Track a whole sequence causally.

    Returns every track ever created and the per-frame online labels
    (confirmed tracks only).
    """
    seq.validate()
    tracker = Tracker(cfg)
    labels = {frame.frame_index: tracker.process(frame) for frame in seq.frames}
    return tracker.tracks, labels

