"""Oriented bird's-eye-view boxes: corners, rotated IoU and greedy NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

_AREA_EPS = 1e-12


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    wrapped = np.remainder(np.asarray(angles, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)


@dataclass(frozen=True)
class BevBox:
    """Oriented rectangle on the ground plane.

    ``cx``/``cy`` is the box center and ``yaw`` the heading of the length axis.
    The frame (world or ego) is the caller's responsibility.
    """

    cx: float
    cy: float
    yaw: float
    length: float
    width: float

    def __post_init__(self) -> None:
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"box extents must be positive, got l={self.length}, w={self.width}")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def area(self) -> float:
        return self.length * self.width

    @property
    def radius(self) -> float:
        """Half-diagonal; no point of the box lies further from the center."""
        return 0.5 * math.hypot(self.length, self.width)


def corners(box: BevBox) -> list[tuple[float, float]]:
    """Return the 4 vertices counter-clockwise, starting at front-left."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return [(box.cx + c * u - s * v, box.cy + s * u + c * v) for u, v in local]


def polygon_area(poly: Sequence[tuple[float, float]]) -> float:
    """Signed shoelace area (positive for CCW)."""
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def clip_polygon(subject: list[tuple[float, float]], clip: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    output = subject
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inputs = output
        output = []
        # side > 0 means left of edge a->b, i.e. inside for a CCW clip polygon
        sides = [ex * (py - ay) - ey * (px - ax) for px, py in inputs]
        m = len(inputs)
        for j in range(m):
            cur, prev = inputs[j], inputs[j - 1]
            s_cur, s_prev = sides[j], sides[j - 1]
            if s_cur >= 0.0:
                if s_prev < 0.0:
                    output.append(_edge_cross(prev, cur, s_prev, s_cur))
                output.append(cur)
            elif s_prev >= 0.0:
                output.append(_edge_cross(prev, cur, s_prev, s_cur))
    return output


def _edge_cross(p, q, sp: float, sq: float) -> tuple[float, float]:
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _box_key(box: BevBox) -> tuple[float, ...]:
    return (box.cx, box.cy, box.yaw, box.length, box.width)


def intersection_area(a: BevBox, b: BevBox) -> float:
    """Area of the overlap of two oriented boxes (0 for disjoint or degenerate overlap)."""
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= a.radius + b.radius:
        return 0.0
    # Clip in a canonical order so the result is exactly symmetric in (a, b).
    if _box_key(b) < _box_key(a):
        a, b = b, a
    poly = clip_polygon(corners(a), corners(b))
    if len(poly) < 3:
        return 0.0
    area = abs(polygon_area(poly))
    return area if area >= _AREA_EPS else 0.0


def bev_iou(a: BevBox, b: BevBox) -> float:
    """Rotated intersection-over-union of two BEV boxes, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def iou_matrix(rows: Sequence[BevBox], cols: Sequence[BevBox]) -> np.ndarray:
    out = np.zeros((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = bev_iou(a, b)
    return out


def bev_nms(entries: Iterable[tuple[BevBox, Any, float]], iou_threshold: float) -> list[int]:
    """Greedy BEV non-maximum suppression.

    Parameters
    ----------
    entries : iterable of (box, priority, score)
        ``priority`` is any orderable key; higher is processed first. Ties are
        broken by higher score, then by lower input index.
    iou_threshold : float
        A box is suppressed when its IoU with an already kept box is strictly
        greater than this value.

    Returns
    -------
    list of int
        Indices of the kept entries, in processing order.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    items = list(entries)
    # Python's sort is stable under reverse=True, so equal keys keep input order.
    order = sorted(range(len(items)), key=lambda i: (items[i][1], items[i][2]), reverse=True)
    kept: list[int] = []
    for i in order:
        box = items[i][0]
        if all(bev_iou(box, items[k][0]) <= iou_threshold for k in kept):
            kept.append(i)
    return kept
