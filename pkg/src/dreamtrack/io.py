"""JSONL sequence and label files, KITTI label conversion and plot-data export.

Sequence files hold one frame per line::

    {"schema_version": 1, "sequence_id": ..., "frame_index": ..., "timestamp": ...,
     "ego_pose": {"x", "y", "yaw"}, "detections": [...], "pool_detections": [...]}

Label files hold one frame per line::

    {"schema_version": 1, "sequence_id": ..., "frame_index": ..., "labels": [...]}

All writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .data import (
    GROUND_TRUTH,
    SCHEMA_VERSION,
    Detection,
    EgoPose,
    Frame,
    PseudoLabel,
    SequenceLog,
)
from .geometry import corners, wrap_angle

log = logging.getLogger(__name__)

DETECTION_FIELDS = ("cx", "cy", "cz", "yaw", "l", "w", "h", "score")
LABEL_FIELDS = ("frame_index", "track_id", "cx", "cy", "cz", "yaw", "l", "w", "h", "score", "source")


class FormatError(ValueError):
    """A file does not follow the expected schema."""


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def _det_to_dict(d: Detection) -> dict:
    return {k: float(getattr(d, k)) for k in DETECTION_FIELDS}


def _det_from_dict(obj: dict) -> Detection:
    missing = [k for k in DETECTION_FIELDS if k not in obj]
    if missing:
        raise FormatError(f"detection missing fields {missing}")
    return Detection(*(float(obj[k]) for k in DETECTION_FIELDS))


def label_to_dict(lab: PseudoLabel) -> dict:
    out = {}
    for k in LABEL_FIELDS:
        v = getattr(lab, k)
        out[k] = v if k == "source" else (int(v) if k in ("frame_index", "track_id") else float(v))
    return out


def label_from_dict(obj: dict) -> PseudoLabel:
    missing = [k for k in LABEL_FIELDS if k not in obj]
    if missing:
        raise FormatError(f"label missing fields {missing}")
    vals = []
    for k in LABEL_FIELDS:
        v = obj[k]
        vals.append(v if k == "source" else (int(v) if k in ("frame_index", "track_id") else float(v)))
    return PseudoLabel(*vals)


def frame_to_dict(seq_id: str, frame: Frame) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "sequence_id": seq_id,
        "frame_index": int(frame.frame_index),
        "timestamp": float(frame.timestamp),
        "ego_pose": {"x": float(frame.ego_pose.x), "y": float(frame.ego_pose.y), "yaw": float(frame.ego_pose.yaw)},
        "detections": [_det_to_dict(d) for d in frame.detections],
    }
    if frame.pool_detections is not None:
        out["pool_detections"] = [_det_to_dict(d) for d in frame.pool_detections]
    return out


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            version = obj.get("schema_version")
            if version != SCHEMA_VERSION:
                raise FormatError(f"{path}:{lineno}: unsupported schema_version {version!r}")
            yield lineno, obj


def load_sequence(path) -> SequenceLog:
    """Read and validate a sequence JSONL file."""
    path = Path(path)
    seq_id = None
    frames: list[Frame] = []
    for lineno, obj in _read_jsonl(path):
        try:
            sid = str(obj["sequence_id"])
            pose = obj["ego_pose"]
            frame = Frame(
                frame_index=int(obj["frame_index"]),
                timestamp=float(obj["timestamp"]),
                ego_pose=EgoPose(float(pose["x"]), float(pose["y"]), float(pose["yaw"])),
                detections=[_det_from_dict(d) for d in obj.get("detections", [])],
                pool_detections=(
                    [_det_from_dict(d) for d in obj["pool_detections"]] if "pool_detections" in obj else None
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if seq_id is None:
            seq_id = sid
        elif sid != seq_id:
            raise FormatError(f"{path}:{lineno}: sequence_id {sid!r} differs from {seq_id!r}")
        if frames and not frame.timestamp > frames[-1].timestamp:
            raise FormatError(
                f"{path}:{lineno}: frame {frame.frame_index}: timestamp {frame.timestamp} "
                f"does not increase (previous {frames[-1].timestamp})"
            )
        if frames and not frame.frame_index > frames[-1].frame_index:
            raise FormatError(f"{path}:{lineno}: frame {frame.frame_index}: frame index does not increase")
        frames.append(frame)
    return SequenceLog(seq_id if seq_id is not None else path.stem, frames)


def sequence_text(seq: SequenceLog) -> str:
    return "".join(dumps(frame_to_dict(seq.sequence_id, f)) + "\n" for f in seq.frames)


def save_sequence(seq: SequenceLog, path) -> None:
    atomic_write_text(path, sequence_text(seq))


def labels_text(seq_id: str, labels: Mapping[int, Iterable[PseudoLabel]]) -> str:
    lines = []
    for frame_index in sorted(labels):
        obj = {
            "schema_version": SCHEMA_VERSION,
            "sequence_id": seq_id,
            "frame_index": int(frame_index),
            "labels": [label_to_dict(lab) for lab in labels[frame_index]],
        }
        lines.append(dumps(obj) + "\n")
    return "".join(lines)


def save_labels(seq_id: str, labels: Mapping[int, Iterable[PseudoLabel]], path) -> None:
    atomic_write_text(path, labels_text(seq_id, labels))


def load_labels(path) -> tuple[str, dict[int, list[PseudoLabel]]]:
    path = Path(path)
    seq_id = None
    out: dict[int, list[PseudoLabel]] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            sid = str(obj["sequence_id"])
            frame_index = int(obj["frame_index"])
            labels = [label_from_dict(d) for d in obj.get("labels", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        seq_id = sid if seq_id is None else seq_id
        if frame_index in out:
            raise FormatError(f"{path}:{lineno}: duplicate frame {frame_index}")
        out[frame_index] = labels
    return (seq_id if seq_id is not None else path.stem), out


def jsonl_files(path) -> list[Path]:
    """A single ``.jsonl`` file, or every ``.jsonl`` file directly inside a directory."""
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix == ".jsonl" and p.is_file())
    if path.is_file():
        return [path]
    raise FileNotFoundError(f"no such file or directory: {path}")


# --- KITTI object labels ---------------------------------------------------

def kitti_row_to_label(fields: list[str], frame_index: int, object_index: int) -> Optional[PseudoLabel]:
    """Convert one KITTI label row; returns None for non-Car rows.

    KITTI rows are ``type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y [score]``
    in camera coordinates (x right, y down, z forward; location is the bottom
    face center). The ego BEV frame used here has x forward and y left, so
    ``cx = z``, ``cy = -x``, ``cz = -y + h/2`` and ``yaw = -rotation_y - pi/2``.
    """
    if len(fields) not in (15, 16):
        raise ValueError(f"expected 15 or 16 fields, got {len(fields)}")
    if fields[0] != "Car":
        return None
    h, w, l, x, y, z, ry = (float(v) for v in fields[8:15])
    score = float(fields[15]) if len(fields) == 16 else 1.0
    if not (h > 0 and w > 0 and l > 0) or not all(map(math.isfinite, (x, y, z, ry))):
        raise ValueError("non-positive dimensions or non-finite pose")
    return PseudoLabel(frame_index, object_index, z, -x, -y + 0.5 * h, wrap_angle(-ry - 0.5 * math.pi), l, w, h, score, GROUND_TRUTH)


def convert_kitti_labels(directory) -> tuple[dict[int, list[PseudoLabel]], int]:
    """Read a directory of KITTI label ``.txt`` files, one file per frame.

    Returns per-frame Car boxes and the number of malformed rows skipped.
    Frame indices come from numeric file stems, otherwise from sorted order.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix == ".txt")
    out: dict[int, list[PseudoLabel]] = {}
    skipped = 0
    for order, path in enumerate(files):
        frame_index = int(path.stem) if path.stem.isdigit() else order
        labels = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                fields = line.split()
                if not fields:
                    continue
                try:
                    lab = kitti_row_to_label(fields, frame_index, len(labels))
                except ValueError as exc:
                    skipped += 1
                    log.warning("%s:%d: skipped malformed row (%s)", path, lineno, exc)
                    continue
                if lab is not None:
                    labels.append(lab)
        out[frame_index] = labels
    if skipped:
        log.warning("skipped %d malformed KITTI rows", skipped)
    return out, skipped


# --- plot data -------------------------------------------------------------

def _to_world(pose: EgoPose, pts):
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return [[pose.x + c * x - s * y, pose.y + s * x + c * y] for x, y in pts]


def plot_data(seq: SequenceLog, labels: Optional[Mapping[int, Iterable[PseudoLabel]]] = None) -> dict:
    """World-frame BEV polygons per frame plus per-track center polylines."""
    frames = []
    tracks: dict[int, list[list[float]]] = {}
    for frame in seq.frames:
        pose = frame.ego_pose
        entry = {
            "frame_index": frame.frame_index,
            "ego_pose": [pose.x, pose.y, pose.yaw],
            "detections": [_to_world(pose, corners(d.box)) for d in frame.detections],
            "labels": [],
        }
        for lab in (labels or {}).get(frame.frame_index, []):
            entry["labels"].append(
                {"track_id": lab.track_id, "source": lab.source, "polygon": _to_world(pose, corners(lab.box))}
            )
            if lab.track_id >= 0:
                tracks.setdefault(lab.track_id, []).append(_to_world(pose, [(lab.cx, lab.cy)])[0])
        frames.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "sequence_id": seq.sequence_id,
        "frames": frames,
        "tracks": {str(k): v for k, v in sorted(tracks.items())},
    }
