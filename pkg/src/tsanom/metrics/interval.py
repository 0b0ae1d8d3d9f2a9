"""Interval-level confusion counts, overlap, point-wise scores and top-k thresholding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..core import IntervalSet, intersect, point_count
from ..errors import MetricError


class IntervalConfusion(NamedTuple):
    tp: int
    fp: int
    fn_: int


@dataclass(frozen=True)
class PRF:
    """Precision / recall / F1 in percent. Undefined ratios are reported as 0."""

    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


def interval_confusion(pred: IntervalSet, gt: IntervalSet) -> IntervalConfusion:
    """Count TP/FP/FN with any-overlap matching.

    A gt interval touched by at least one prediction is one TP no matter how
    many predictions touch it; a prediction touching no gt interval is an FP.
    """
    gt_iv = gt.intervals
    pred_iv = pred.intervals
    n_gt = len(gt_iv)
    if not pred_iv or not n_gt:
        return IntervalConfusion(0, len(pred_iv), n_gt)
    tp = fp = 0
    lo = 0
    counted = 0  # gt intervals below this index are already credited
    for ps, pe in pred_iv:
        # both sides are sorted: gt intervals ending before this prediction
        # can't touch any later prediction either
        while lo < n_gt and gt_iv[lo][1] < ps:
            lo += 1
        k = lo
        while k < n_gt and gt_iv[k][0] <= pe:
            k += 1
        if k == lo:
            fp += 1
        elif k > counted:
            # k never decreases, so only indices from max(lo, counted) are new
            tp += k - max(lo, counted)
            counted = k
    return IntervalConfusion(tp, fp, n_gt - tp)


def prf_from_counts(tp: int, fp: int, fn: int) -> PRF:
    undefined = []
    if tp + fp == 0:
        precision = 0.0
        undefined.append("precision")
    else:
        precision = 100.0 * tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        undefined.append("recall")
    else:
        recall = 100.0 * tp / (tp + fn)
    if precision + recall == 0:
        f1 = 0.0
        if undefined:
            undefined.append("f1")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return PRF(precision, recall, f1, tuple(undefined))


def overlap_score(pred: IntervalSet, gt: IntervalSet) -> float:
    """|pred ∩ gt| / max(|pred|, |gt|) over point sets; two empty sets score 1."""
    n_pred = point_count(pred)
    n_gt = point_count(gt)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    return point_count(intersect(pred, gt)) / max(n_pred, n_gt)


def pointwise_metrics(pred_labels: Sequence[bool], gt_labels: Sequence[bool]) -> PRF:
    if len(pred_labels) != len(gt_labels):
        raise MetricError(f"label length mismatch: {len(pred_labels)} vs {len(gt_labels)}")
    p = np.asarray(pred_labels, dtype=bool)
    g = np.asarray(gt_labels, dtype=bool)
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    return prf_from_counts(tp, fp, fn)


def pointwise_counts(pred_labels: Sequence[bool], gt_labels: Sequence[bool]) -> tuple[int, int, int]:
    if len(pred_labels) != len(gt_labels):
        raise MetricError(f"label length mismatch: {len(pred_labels)} vs {len(gt_labels)}")
    p = np.asarray(pred_labels, dtype=bool)
    g = np.asarray(gt_labels, dtype=bool)
    return int(np.sum(p & g)), int(np.sum(p & ~g)), int(np.sum(~p & g))


def topk_count(n: int, fraction: float) -> int:
    # round first so 0.3 * 10 is 3, not 3.0000000000000004 -> 4
    return min(n, math.ceil(round(fraction * n, 9)))


def topk_threshold(scores: Sequence[float], fraction: float) -> list[bool]:
    """Flag the ceil(fraction * T) highest scores; ties resolve to the earliest index."""
    if not (0 < fraction <= 1):
        raise MetricError(f"fraction must be in (0, 1], got {fraction}")
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise MetricError("cannot threshold an empty score sequence")
    k = topk_count(arr.size, fraction)
    order = np.argsort(-arr, kind="stable")
    labels = np.zeros(arr.size, dtype=bool)
    labels[order[:k]] = True
    return labels.tolist()
