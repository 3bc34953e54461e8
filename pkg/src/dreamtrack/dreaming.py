"""Offline refinement of tracks into pseudo-labels.

The passes run in order: RTS smoothing, per-track size re-estimation,
interpolation of interior misses, backward/forward extrapolation against a
low-threshold candidate pool, and finally per-frame priority NMS.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .data import (
    DETECTED,
    EXTRAPOLATED,
    INTERPOLATED,
    MISSED,
    SMOOTHED,
    Detection,
    PseudoLabel,
    SequenceLog,
)
from .dynamics import THETA, L, W, X, Y, ProcessNoise, ego_motion_from_poses
from .filtering import DegenerateUpdateError, MeasurementNoise, measurement_model, predict, rts_smooth, update
from .geometry import bev_iou, bev_nms
from .tracker import Track, in_fov, run_online, state_box

FORWARD = "forward"
BACKWARD = "backward"


class CandidatePool:
    """Per-frame low-threshold detections searched during extrapolation."""

    def __init__(self, frames: dict[int, list[Detection]] | None = None, score_min: float = -math.inf):
        self.score_min = score_min
        self._frames = {k: [d for d in v if d.score >= score_min] for k, v in (frames or {}).items()}

    @classmethod
    def from_sequence(cls, seq: SequenceLog, score_min: float) -> "CandidatePool":
        frames = {}
        for frame in seq.frames:
            dets = frame.pool_detections if frame.pool_detections is not None else frame.detections
            frames[frame.frame_index] = list(dets)
        return cls(frames, score_min)

    def __getitem__(self, frame_index: int) -> list[Detection]:
        return self._frames.get(frame_index, [])

    def search(self, frame_index: int, cx: float, cy: float, area_m2: float) -> list[Detection]:
        """Candidates whose centers fall in the axis-aligned square of the given area around (cx, cy)."""
        half = 0.5 * math.sqrt(area_m2)
        return [
            d
            for d in self[frame_index]
            if abs(d.cx - cx) <= half and abs(d.cy - cy) <= half and d.score >= self.score_min
        ]


@dataclass
class RefinedTrack:
    """A track's per-frame estimates during offline refinement.

    ``states``/``covs``/``sources`` are keyed by frame index and cover the span
    from the first to the last measurement-updated frame.
    """

    track: Track
    frames: list[int]
    states: dict[int, np.ndarray]
    covs: dict[int, np.ndarray]
    sources: dict[int, str]
    detections: dict[int, Detection]
    size: Optional[tuple[float, float]] = None
    resize_skipped: bool = False
    labels: list[tuple[PseudoLabel, int]] = field(default_factory=list)  # (label, emission order)

    @property
    def id(self) -> int:
        return self.track.id

    @property
    def confirmed(self) -> bool:
        return self.track.confirmed


def _span(track: Track) -> int:
    """Number of history steps up to and including the last detected frame."""
    last = max((k for k, r in enumerate(track.records) if r.source == DETECTED), default=-1)
    return last + 1


def smooth_all(tracks: Iterable[Track], smooth: bool = True) -> list[RefinedTrack]:
    """Replace every track's filtered states with RTS-smoothed ones.

    Trailing predicted-only steps carry no information and are cut; they are
    revisited by extrapolation. With ``smooth=False`` the filtered estimates
    are kept (useful for ablations).
    """
    out = []
    for track in tracks:
        n = _span(track)
        history = track.history.truncated(n)
        if smooth:
            est = rts_smooth(history)
        else:
            est = list(zip(history.posteriors, history.post_covs))
        records = track.records[:n]
        frames = [r.frame_index for r in records]
        out.append(
            RefinedTrack(
                track=track,
                frames=frames,
                states={f: x.copy() for f, (x, _) in zip(frames, est)},
                covs={f: P.copy() for f, (_, P) in zip(frames, est)},
                sources={r.frame_index: r.source for r in records},
                detections={r.frame_index: r.detection for r in records if r.detection is not None},
            )
        )
    return out


def top_score_size(detections: Sequence[Detection], k: int = 3) -> tuple[float, float]:
    """Mean (l, w) of the ``k`` highest-scoring detections."""
    if not detections:
        raise ValueError("no detections to size from")
    best = sorted(detections, key=lambda d: d.score, reverse=True)[:k]
    return (sum(d.l for d in best) / len(best), sum(d.w for d in best) / len(best))


def _with_size(state: np.ndarray, size: tuple[float, float], back_axle_fraction: float) -> np.ndarray:
    """Change (l, w) while keeping the box center fixed."""
    cx, cy = measurement_model(state, back_axle_fraction)[:2]
    out = state.copy()
    out[L], out[W] = size
    off = back_axle_fraction * size[0]
    out[X] = cx - off * math.cos(state[THETA])
    out[Y] = cy - off * math.sin(state[THETA])
    return out


def resize_tracks(refined: Iterable[RefinedTrack], back_axle_fraction: float = 0.25) -> list[RefinedTrack]:
    out = []
    for rt in refined:
        dets = list(rt.detections.values())
        if not dets:
            rt.resize_skipped = True
            out.append(rt)
            continue
        rt.size = top_score_size(dets)
        rt.states = {f: _with_size(x, rt.size, back_axle_fraction) for f, x in rt.states.items()}
        out.append(rt)
    return out


def _label(rt: RefinedTrack, frame_index: int, state: np.ndarray, source: str, cfg: PipelineConfig) -> PseudoLabel:
    box = state_box(state, cfg.back_axle_fraction)
    l, w = rt.size if rt.size is not None else (box.length, box.width)
    det = rt.detections.get(frame_index) if source == SMOOTHED else None
    if det is not None:
        cz, h, score = det.cz, det.h, det.score
    else:
        (cz, h), score = rt.track.median_height(), rt.track.mean_score()
    return PseudoLabel(frame_index, rt.id, box.cx, box.cy, cz, box.yaw, l, w, h, score, source)


def label_detected(rt: RefinedTrack, cfg: PipelineConfig) -> list[PseudoLabel]:
    """Labels for measurement-updated frames, from the refined state."""
    return [_label(rt, f, rt.states[f], SMOOTHED, cfg) for f in rt.frames if rt.sources[f] == DETECTED]


def interpolate(rt: RefinedTrack, cfg: PipelineConfig, order: Iterator[int]) -> list[PseudoLabel]:
    """Fill interior missed frames from the smoothed state."""
    emitted = []
    for f in rt.frames:
        if rt.sources[f] == MISSED:
            rt.sources[f] = INTERPOLATED
            lab = _label(rt, f, rt.states[f], INTERPOLATED, cfg)
            rt.labels.append((lab, next(order)))
            emitted.append(lab)
    return emitted


def extrapolate(
    rt: RefinedTrack,
    seq: SequenceLog,
    pool: CandidatePool,
    direction: str,
    cfg: PipelineConfig,
    order: Iterator[int] | None = None,
) -> list[PseudoLabel]:
    """Extend a track beyond one of its endpoints using pool candidates as measurements.

    Each step predicts one frame further, searches the pool around the
    predicted box center, and updates with the candidate of highest BEV IoU.
    Stops after ``cfg.extrap_max_consecutive_misses`` consecutive frames
    without a candidate, on leaving the field of view, or at the sequence end.
    """
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")
    if not rt.frames:
        return []
    order = order if order is not None else itertools.count()
    q = ProcessNoise(cfg.q)
    r = MeasurementNoise(cfg.r_extrap)
    frames = seq.frames
    pos = {fr.frame_index: i for i, fr in enumerate(frames)}
    backward = direction == BACKWARD
    anchor = rt.frames[0] if backward else rt.frames[-1]
    start = pos[anchor]
    steps = range(start - 1, -1, -1) if backward else range(start + 1, len(frames))

    x, P = rt.states[anchor].copy(), rt.covs[anchor].copy()
    misses = 0
    emitted = []
    for p in steps:
        a, b = (frames[p], frames[p + 1]) if backward else (frames[p - 1], frames[p])
        ego = ego_motion_from_poses(a.ego_pose.as_tuple(), b.ego_pose.as_tuple(), b.timestamp - a.timestamp)
        x, P, _ = predict(x, P, ego, q, backward=backward)
        if not in_fov(x, cfg.fov):
            break
        pred = state_box(x, cfg.back_axle_fraction)
        frame_index = frames[p].frame_index
        best, best_iou = None, cfg.extrap_iou_min
        for cand in pool.search(frame_index, pred.cx, pred.cy, cfg.extrap_search_area_m2):
            iou = bev_iou(pred, cand.box)
            if iou > best_iou:
                best, best_iou = cand, iou
        if best is not None:
            try:
                x, P, _ = update(x, P, best.measurement, r, cfg.back_axle_fraction)
            except DegenerateUpdateError:
                break
            if rt.size is not None:
                x = _with_size(x, rt.size, cfg.back_axle_fraction)
            misses = 0
            lab = _label(rt, frame_index, x, EXTRAPOLATED, cfg)
            rt.labels.append((lab, next(order)))
            emitted.append(lab)
        else:
            misses += 1
            if misses >= cfg.extrap_max_consecutive_misses:
                break
    return emitted


def nms_priority(source: str, emission: int) -> tuple[int, int]:
    """Refinement-produced labels outrank detections; among them, later emissions win."""
    if source in (INTERPOLATED, EXTRAPOLATED):
        return (1, emission)
    return (0, 0)


def finalize(refined: Iterable[RefinedTrack], cfg: PipelineConfig) -> dict[int, list[PseudoLabel]]:
    """Per-frame priority NMS over the labels of confirmed tracks."""
    per_frame: dict[int, list[tuple[PseudoLabel, int]]] = {}
    for rt in refined:
        if not rt.confirmed:
            continue
        for lab, emission in rt.labels:
            per_frame.setdefault(lab.frame_index, []).append((lab, emission))
    out = {}
    for frame_index in sorted(per_frame):
        items = per_frame[frame_index]
        entries = [(lab.box, nms_priority(lab.source, em), lab.score) for lab, em in items]
        kept = bev_nms(entries, cfg.nms_iou)
        out[frame_index] = sorted((items[i][0] for i in kept), key=lambda lab: (lab.track_id, lab.source))
    return out


def export_st_baseline(frames: Iterable, threshold: float = 0.8) -> dict[int, list[PseudoLabel]]:
    """Self-training baseline: keep detections scoring strictly above ``threshold``.

    ``frames`` holds :class:`~dreamtrack.data.Frame` objects; labels carry track id -1.
    """
    out = {}
    for frame in frames:
        out[frame.frame_index] = [
            PseudoLabel(frame.frame_index, -1, d.cx, d.cy, d.cz, d.yaw, d.l, d.w, d.h, d.score, DETECTED)
            for d in frame.detections
            if d.score > threshold
        ]
    return out


@dataclass(frozen=True)
class Stages:
    smooth: bool = True
    resize: bool = True
    interpolate: bool = True
    extrapolate: bool = True


def dream(
    seq: SequenceLog,
    cfg: PipelineConfig | None = None,
    stages: Stages = Stages(),
) -> tuple[dict[int, list[PseudoLabel]], list[RefinedTrack]]:
    """Run tracking and the full offline refinement on one sequence.

    Returns per-frame labels (every frame of the sequence present, possibly
    empty) and the refined tracks.
    """
    cfg = cfg or PipelineConfig()
    tracks, _ = run_online(seq, cfg)
    tracks = [t for t in tracks if t.confirmed]
    refined = smooth_all(tracks, smooth=stages.smooth)
    if stages.resize:
        refined = resize_tracks(refined, cfg.back_axle_fraction)
    order = itertools.count()
    pool = CandidatePool.from_sequence(seq, cfg.extrap_score_min)
    for rt in refined:
        rt.labels = [(lab, -1) for lab in label_detected(rt, cfg)]
        if stages.interpolate:
            interpolate(rt, cfg, order)
    if stages.extrapolate:
        for rt in refined:
            extrapolate(rt, seq, pool, BACKWARD, cfg, order)
            extrapolate(rt, seq, pool, FORWARD, cfg, order)
    labels = finalize(refined, cfg)
    return {f.frame_index: labels.get(f.frame_index, []) for f in seq.frames}, refined
