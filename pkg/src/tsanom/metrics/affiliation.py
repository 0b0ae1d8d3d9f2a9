"""Affiliation precision / recall (Huet et al., KDD 2022).

Point ``i`` of a 1-based series is the continuous cell ``[i-1, i)`` and the
timeline is ``[0, T]``, the same discretisation as the reference package.
Each ground-truth event owns an affiliation zone bounded by the midpoints
between neighbouring events. Inside a zone, every predicted instant gets the
probability that a uniformly random instant of the zone lies at least as far
from the event; every ground-truth instant gets the probability that a
uniformly random instant of the zone lies at least as far from it as the
nearest prediction does. All integrands are piecewise linear, so the zone
averages are computed exactly by splitting at every kink and applying the
midpoint rule on each piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from ..core import IntervalSet
from ..errors import AffiliationUndefinedError, BoundsError

Span = tuple[float, float]


@dataclass(frozen=True)
class AffiliationResult:
    precision: float  # nan when no zone contains a prediction
    recall: float
    f1: float
    precision_undefined: bool
    per_zone_precision: tuple[float, ...]
    per_zone_recall: tuple[float, ...]


def _to_spans(intervals: IntervalSet, length: int) -> list[Span]:
    spans = []
    for iv in intervals:
        if iv.start < 1 or iv.end > length:
            raise BoundsError(f"interval {iv} outside [1, {length}]")
        spans.append((float(iv.start - 1), float(iv.end)))
    return spans


def affiliation_zones(gt: Sequence[Span], lo: float, hi: float) -> list[Span]:
    cuts = [lo]
    for (_, b), (a_next, _) in zip(gt, gt[1:]):
        cuts.append((b + a_next) / 2.0)
    cuts.append(hi)
    return list(zip(cuts[:-1], cuts[1:]))


def _clip(spans: Sequence[Span], zone: Span) -> list[Span]:
    out = []
    for a, b in spans:
        s, e = max(a, zone[0]), min(b, zone[1])
        if e > s:
            out.append((s, e))
    return out


def _dist_to_span(x: float, span: Span) -> float:
    a, b = span
    if x < a:
        return a - x
    if x > b:
        return x - b
    return 0.0


def _dist_to_spans(x: float, spans: Sequence[Span]) -> float:
    return min(_dist_to_span(x, s) for s in spans)


def _piecewise_integral(f: Callable[[float], float], lo: float, hi: float,
                        knots: Sequence[float], kinks: Sequence[Callable[[float], float]]) -> float:
    """Integrate ``f`` over [lo, hi] given that it is linear between ``knots``
    refined by the sign changes of each linear-between-knots ``kinks`` function."""
    xs = sorted({lo, hi, *[k for k in knots if lo < k < hi]})
    refined = set(xs)
    for u, v in zip(xs, xs[1:]):
        for h in kinks:
            hu, hv = h(u), h(v)
            if hu * hv < 0:
                refined.add(u + (v - u) * hu / (hu - hv))
    pts = sorted(refined)
    return sum((v - u) * f((u + v) / 2.0) for u, v in zip(pts, pts[1:]))


def _survival(y: float, d: float, zone: Span) -> float:
    """P(|Z - y| >= d) for Z uniform on ``zone`` (measure form, 1 at d == 0)."""
    if d <= 0.0:
        return 1.0
    z0, z1 = zone
    return (max(0.0, y - d - z0) + max(0.0, z1 - y - d)) / (z1 - z0)


def _survival_to_event(d: float, event: Span, zone: Span) -> float:
    """P(dist(Z, event) >= d) for Z uniform on ``zone``."""
    if d <= 0.0:
        return 1.0
    z0, z1 = zone
    a, b = event
    return (max(0.0, a - z0 - d) + max(0.0, z1 - b - d)) / (z1 - z0)


def precision_probability(preds: Sequence[Span], event: Span, zone: Span) -> float:
    a, b = event
    z0, z1 = zone
    total = 0.0
    width = 0.0

    def d(x: float) -> float:
        return _dist_to_span(x, event)

    kinks = [lambda x: d(x) - (a - z0), lambda x: d(x) - (z1 - b)]
    for p, q in preds:
        total += _piecewise_integral(lambda x: _survival_to_event(d(x), event, zone), p, q, [a, b], kinks)
        width += q - p
    return total / width


def recall_probability(preds: Sequence[Span], event: Span, zone: Span) -> float:
    if not preds:
        return 0.0
    a, b = event
    z0, z1 = zone
    knots = [v for p, q in preds for v in (p, q)]
    knots += [(q + p2) / 2.0 for (_, q), (p2, _) in zip(preds, preds[1:])]

    def d(y: float) -> float:
        return _dist_to_spans(y, preds)

    kinks = [lambda y: y - d(y) - z0, lambda y: z1 - y - d(y)]
    total = _piecewise_integral(lambda y: _survival(y, d(y), zone), a, b, knots, kinks)
    return total / (b - a)


def affiliation_metrics(pred: IntervalSet, gt: IntervalSet, length: int) -> AffiliationResult:
    if not gt:
        raise AffiliationUndefinedError("affiliation metrics need at least one ground-truth event")
    gt_spans = _to_spans(gt, length)
    pred_spans = _to_spans(pred, length)
    zones = affiliation_zones(gt_spans, 0.0, float(length))
    precs: list[float] = []
    recs: list[float] = []
    for event, zone in zip(gt_spans, zones):
        inside = _clip(pred_spans, zone)
        if inside:
            precs.append(precision_probability(inside, event, zone))
        recs.append(recall_probability(inside, event, zone))
    recall = sum(recs) / len(recs)
    if precs:
        precision = sum(precs) / len(precs)
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        undefined = False
    else:
        precision = math.nan
        f1 = 0.0
        undefined = True
    return AffiliationResult(precision, recall, f1, undefined, tuple(precs), tuple(recs))
