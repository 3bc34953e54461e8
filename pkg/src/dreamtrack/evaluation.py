"""Average precision of BEV label sets against ground truth, split by IoU threshold and range."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .data import PseudoLabel
from .geometry import BevBox, iou_matrix

IOU_THRESHOLDS = (0.5, 0.7)
RANGE_BINS = (("0-30", 0.0, 30.0), ("30-50", 30.0, 50.0), ("50-80", 50.0, 80.0), ("0-80", 0.0, 80.0))
MAX_RANGE = 80.0
RECALL_POINTS = 40


def box_range(box: BevBox) -> float:
    return math.hypot(box.cx, box.cy)


def range_bin(box: BevBox) -> Optional[str]:
    """Narrow depth bin of a box center: [0, 30), [30, 50), [50, 80]; None beyond 80 m."""
    r = box_range(box)
    if r > MAX_RANGE:
        return None
    if r < 30.0:
        return "0-30"
    if r < 50.0:
        return "30-50"
    return "50-80"


def in_bin(box: BevBox, name: str) -> bool:
    b = range_bin(box)
    if b is None:
        return False
    return name == "0-80" or b == name


def match_frame(
    pred_boxes: Sequence[BevBox],
    pred_scores: Sequence[float],
    gt_boxes: Sequence[BevBox],
    iou_thresh: float,
    iou: Optional[np.ndarray] = None,
) -> tuple[list[int], list[bool]]:
    """Greedy score-ordered matching.

    Returns
    -------
    pred_match : list of int
        Index of the matched ground-truth box per prediction, or -1 (false positive).
    gt_matched : list of bool
    """
    if iou is None:
        iou = iou_matrix(pred_boxes, gt_boxes)
    order = sorted(range(len(pred_boxes)), key=lambda i: -pred_scores[i])
    pred_match = [-1] * len(pred_boxes)
    gt_matched = [False] * len(gt_boxes)
    for i in order:
        best_j, best = -1, iou_thresh
        for j in range(len(gt_boxes)):
            if not gt_matched[j] and iou[i, j] > best:
                best_j, best = j, iou[i, j]
        if best_j >= 0:
            pred_match[i] = best_j
            gt_matched[best_j] = True
    return pred_match, gt_matched


def pr_curve(tp_flags: Sequence[bool], scores: Sequence[float], num_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Precision/recall at every distinct score threshold, highest threshold first."""
    scores = np.asarray(scores, dtype=float)
    tp = np.asarray(tp_flags, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    scores, tp = scores[order], tp[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    # one point per threshold: the last prediction of every run of equal scores
    last = np.r_[scores[1:] != scores[:-1], True] if scores.size else np.zeros(0, dtype=bool)
    ctp, cfp = ctp[last], cfp[last]
    precision = ctp / np.maximum(ctp + cfp, 1)
    recall = ctp / num_gt if num_gt > 0 else np.zeros_like(precision, dtype=float)
    return precision.astype(float), recall.astype(float)


def average_precision(
    tp_flags: Sequence[bool],
    scores: Sequence[float],
    num_gt: int,
    recall_points: int = RECALL_POINTS,
    empty_value: Optional[float] = None,
) -> Optional[float]:
    """Interpolated AP sampled at recall 1/n, 2/n, ..., 1.

    With no ground truth the AP is ``empty_value`` (default None, i.e. the cell
    is excluded) when there are no predictions, and 0 otherwise.
    """
    if num_gt < 0:
        raise ValueError("num_gt must be non-negative")
    if num_gt == 0:
        return empty_value if len(scores) == 0 else 0.0
    if len(scores) == 0:
        return 0.0
    precision, recall = pr_curve(tp_flags, scores, num_gt)
    # max precision to the right
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for i in range(1, recall_points + 1):
        r = i / recall_points
        idx = np.nonzero(recall >= r - 1e-12)[0]
        if idx.size:
            total += envelope[idx[0]]
    return float(total / recall_points)


@dataclass
class ApCell:
    iou_threshold: float
    range_bin: str
    ap: Optional[float]
    tp: int
    fp: int
    fn: int
    num_gt: int
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "range_bin": self.range_bin,
            "ap": self.ap,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "num_gt": self.num_gt,
            "pr_curve": [[r, p] for r, p in zip(self.recall, self.precision)],
        }


@dataclass
class ApReport:
    cells: list[ApCell]

    def get(self, iou_threshold: float, bin_name: str) -> ApCell:
        for cell in self.cells:
            if cell.iou_threshold == iou_threshold and cell.range_bin == bin_name:
                return cell
        raise KeyError((iou_threshold, bin_name))

    def ap(self, iou_threshold: float, bin_name: str) -> Optional[float]:
        return self.get(iou_threshold, bin_name).ap

    def to_dict(self) -> dict:
        return {"schema_version": 1, "cells": [c.to_dict() for c in self.cells]}

    def table(self) -> str:
        """Aligned text table, one row per IoU threshold and one column per range bin."""
        names = [b[0] for b in RANGE_BINS]
        head = f"{'AP_BEV':<10}" + "".join(f"{n + ' m':>10}" for n in names)
        lines = [head, "-" * len(head)]
        for t in IOU_THRESHOLDS:
            row = f"{'IoU ' + format(t, '.1f'):<10}"
            for n in names:
                ap = self.ap(t, n)
                row += f"{'-' if ap is None else format(100.0 * ap, '.1f'):>10}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def evaluate(
    predictions: Mapping[object, Iterable[PseudoLabel]],
    ground_truth: Mapping[object, Iterable[PseudoLabel]],
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
    recall_points: int = RECALL_POINTS,
    empty_value: Optional[float] = None,
) -> ApReport:
    """Evaluate label sets keyed by frame (any hashable key, e.g. ``(sequence, frame)``).

    Predictions and ground truth are matched once per frame over all ranges.
    A true positive counts toward its ground-truth box's bin; an unmatched
    prediction counts as a false positive in its own bin. Predictions matched
    to ground truth beyond 80 m are ignored.
    """
    keys = sorted(set(predictions) | set(ground_truth), key=repr)
    acc = {(t, b[0]): ([], [], 0) for t in iou_thresholds for b in RANGE_BINS}
    for key in keys:
        preds = list(predictions.get(key, ()))
        gts = list(ground_truth.get(key, ()))
        pboxes = [p.box for p in preds]
        gboxes = [g.box for g in gts]
        scores = [p.score for p in preds]
        iou = iou_matrix(pboxes, gboxes)
        for t in iou_thresholds:
            pred_match, _ = match_frame(pboxes, scores, gboxes, t, iou)
            for name, _, _ in RANGE_BINS:
                flags, sc, n_gt = acc[(t, name)]
                n_gt += sum(in_bin(g, name) for g in gboxes)
                for i, j in enumerate(pred_match):
                    owner = gboxes[j] if j >= 0 else pboxes[i]
                    if in_bin(owner, name):
                        flags.append(j >= 0)
                        sc.append(scores[i])
                acc[(t, name)] = (flags, sc, n_gt)
    cells = []
    for t in iou_thresholds:
        for name, _, _ in RANGE_BINS:
            flags, sc, n_gt = acc[(t, name)]
            tp = int(sum(flags))
            precision, recall = pr_curve(flags, sc, n_gt) if sc else (np.zeros(0), np.zeros(0))
            cells.append(
                ApCell(
                    iou_threshold=t,
                    range_bin=name,
                    ap=average_precision(flags, sc, n_gt, recall_points, empty_value),
                    tp=tp,
                    fp=len(flags) - tp,
                    fn=n_gt - tp,
                    num_gt=n_gt,
                    precision=[float(v) for v in precision],
                    recall=[float(v) for v in recall],
                )
            )
    return ApReport(cells)
