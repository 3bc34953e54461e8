"""Global nearest-neighbour assignment of detections to tracks on negative BEV IoU."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BevBox, iou_matrix

# Forbidden pairs cost the same as a zero-overlap pair, so the optimum maximizes
# total gated IoU rather than the number of matches.
GATE_SENTINEL = 0.0


def _optimal_cost(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of size ``min(n, m)``.

    Among all optimal assignments, the one whose sorted ``(row, col)`` list is
    lexicographically smallest is returned, so results do not depend on solver
    internals.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost must be finite")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    best = _optimal_cost(cost)
    tol = 1e-9 * (1.0 + np.abs(cost).sum())
    target = min(n, m)

    free_rows = list(range(n))
    free_cols = list(range(m))
    fixed: list[tuple[int, int]] = []
    fixed_cost = 0.0
    for i in range(n):
        if len(fixed) == target:
            break
        free_rows.remove(i)
        rest_rows = np.array(free_rows, dtype=int)
        chosen = None
        for j in free_cols:
            rest_cols = np.array([c for c in free_cols if c != j], dtype=int)
            sub = cost[np.ix_(rest_rows, rest_cols)]
            # the remaining rows must still be able to fill the assignment
            if min(len(rest_rows), len(rest_cols)) < target - len(fixed) - 1:
                continue
            total = fixed_cost + cost[i, j] + _optimal_cost(sub)
            if total <= best + tol:
                chosen = j
                break
        if chosen is not None:
            fixed.append((i, chosen))
            fixed_cost += cost[i, chosen]
            free_cols.remove(chosen)
    return fixed


@dataclass
class AssignmentResult:
    matches: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def associate_iou(iou: np.ndarray, gate: float) -> AssignmentResult:
    """Gated assignment from a precomputed (tracks x detections) IoU matrix."""
    if not 0.0 <= gate <= 1.0:
        raise ValueError(f"gate must lie in [0, 1], got {gate}")
    iou = np.asarray(iou, dtype=float)
    if iou.ndim != 2:
        raise ValueError("iou must be a 2-D matrix")
    n, m = iou.shape
    allowed = iou >= gate
    cost = np.where(allowed, -iou, GATE_SENTINEL)
    matches = []
    if n and m and allowed.any():
        for i, j in hungarian(cost):
            if allowed[i, j]:
                matches.append((i, j, float(iou[i, j])))
    used_t = {i for i, _, _ in matches}
    used_d = {j for _, j, _ in matches}
    return AssignmentResult(
        matches=matches,
        unmatched_tracks=[i for i in range(n) if i not in used_t],
        unmatched_detections=[j for j in range(m) if j not in used_d],
    )


def associate(predicted: Sequence[BevBox], detections: Sequence[BevBox], gate: float = 0.3) -> AssignmentResult:
    """Match predicted track boxes to detection boxes, rejecting pairs with IoU below ``gate``."""
    if not predicted or not detections:
        return associate_iou(np.zeros((len(predicted), len(detections))), gate)
    return associate_iou(iou_matrix(predicted, detections), gate)
