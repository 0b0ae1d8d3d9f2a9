"""Per-segment evaluation reports and corpus aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from ..core import IntervalSet, intervals_to_labels
from .affiliation import affiliation_metrics
from .interval import (
    PRF,
    IntervalConfusion,
    interval_confusion,
    overlap_score,
    pointwise_counts,
    prf_from_counts,
)


@dataclass(frozen=True)
class EvalReport:
    segment_id: str
    confusion: IntervalConfusion
    interval: PRF
    overlap: float
    overlap_both_empty: bool
    pointwise: PRF
    pointwise_counts: tuple[int, int, int]
    affiliation_precision: float | None
    affiliation_recall: float | None
    affiliation_f1: float | None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "tp": self.confusion.tp,
            "fp": self.confusion.fp,
            "fn": self.confusion.fn_,
            "interval": _prf_dict(self.interval),
            "overlap": self.overlap,
            "pointwise": _prf_dict(self.pointwise),
            "pointwise_counts": list(self.pointwise_counts),
            "affiliation": {
                "precision": self.affiliation_precision,
                "recall": self.affiliation_recall,
                "f1": self.affiliation_f1,
            },
            "notes": list(self.notes),
        }


def _prf_dict(p: PRF) -> dict[str, Any]:
    return {"precision": p.precision, "recall": p.recall, "f1": p.f1, "undefined": list(p.undefined)}


def evaluate(pred: IntervalSet, gt: IntervalSet, length: int, segment_id: str = "") -> EvalReport:
    conf = interval_confusion(pred, gt)
    notes = []
    both_empty = not pred and not gt
    if both_empty:
        notes.append("overlap: both sets empty, scored 1.0")
    pw_counts = pointwise_counts(intervals_to_labels(pred, length), intervals_to_labels(gt, length))
    if gt:
        aff = affiliation_metrics(pred, gt, length)
        a_prec = None if aff.precision_undefined else aff.precision
        a_rec, a_f1 = aff.recall, aff.f1
        if aff.precision_undefined:
            notes.append("affiliation precision undefined: no prediction")
    else:
        a_prec = a_rec = a_f1 = None
        notes.append("affiliation undefined: empty ground truth")
    return EvalReport(
        segment_id=segment_id,
        confusion=conf,
        interval=prf_from_counts(conf.tp, conf.fp, conf.fn_),
        overlap=overlap_score(pred, gt),
        overlap_both_empty=both_empty,
        pointwise=prf_from_counts(*pw_counts),
        pointwise_counts=pw_counts,
        affiliation_precision=a_prec,
        affiliation_recall=a_rec,
        affiliation_f1=a_f1,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class CorpusReport:
    segments: int
    tp: int
    fp: int
    fn: int
    interval: PRF
    overlap: float  # percent, mean over segments
    pointwise: PRF
    affiliation_precision: float | None
    affiliation_recall: float | None
    affiliation_f1: float | None
    undefined: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        def r2(x: float | None) -> float | None:
            return None if x is None else round(x, 2)

        return {
            "segments": self.segments,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": r2(self.interval.precision),
            "recall": r2(self.interval.recall),
            "f1": r2(self.interval.f1),
            "overlap": r2(self.overlap),
            "pointwise": {"precision": r2(self.pointwise.precision), "recall": r2(self.pointwise.recall),
                          "f1": r2(self.pointwise.f1)},
            "affiliation": {"precision": r2(self.affiliation_precision), "recall": r2(self.affiliation_recall),
                            "f1": r2(self.affiliation_f1)},
            "undefined": list(self.undefined),
        }


def _mean(xs: Sequence[float]) -> float | None:
    return sum(xs) / len(xs) if xs else None


def aggregate(reports: Iterable[EvalReport]) -> CorpusReport:
    """Micro-average interval and point-wise counts; average overlap and affiliation per segment."""
    reports = list(reports)
    tp = sum(r.confusion.tp for r in reports)
    fp = sum(r.confusion.fp for r in reports)
    fn = sum(r.confusion.fn_ for r in reports)
    ptp = sum(r.pointwise_counts[0] for r in reports)
    pfp = sum(r.pointwise_counts[1] for r in reports)
    pfn = sum(r.pointwise_counts[2] for r in reports)
    interval = prf_from_counts(tp, fp, fn)
    pointwise = prf_from_counts(ptp, pfp, pfn)
    undefined = [f"interval.{u}" for u in interval.undefined] + [f"pointwise.{u}" for u in pointwise.undefined]
    overlap = _mean([r.overlap for r in reports])
    a_p = _mean([r.affiliation_precision for r in reports if r.affiliation_precision is not None])
    a_r = _mean([r.affiliation_recall for r in reports if r.affiliation_recall is not None])
    if a_p is None:
        undefined.append("affiliation.precision")
    a_f = None
    if a_p is not None and a_r is not None:
        a_f = 0.0 if a_p + a_r == 0 else 2 * a_p * a_r / (a_p + a_r)
    pct = lambda x: None if x is None else 100.0 * x  # noqa: E731
    return CorpusReport(
        segments=len(reports), tp=tp, fp=fp, fn=fn, interval=interval,
        overlap=0.0 if overlap is None else 100.0 * overlap,
        pointwise=pointwise,
        affiliation_precision=pct(a_p), affiliation_recall=pct(a_r), affiliation_f1=pct(a_f),
        undefined=tuple(undefined),
    )


def corpus_from_counts(tp: int, fp: int, fn: int) -> CorpusReport:
    """A corpus summary known only by its interval counts (e.g. externally reported totals)."""
    prf = prf_from_counts(tp, fp, fn)
    return CorpusReport(segments=0, tp=tp, fp=fp, fn=fn, interval=prf, overlap=math.nan,
                        pointwise=PRF(math.nan, math.nan, math.nan), affiliation_precision=None,
                        affiliation_recall=None, affiliation_f1=None, undefined=prf.undefined)


def markdown_table(rows: Sequence[tuple[str, CorpusReport]]) -> str:
    lines = [
        "| Method | TP | FP | FN | Precision (%) | Recall (%) | F1 (%) | Overlap (%) |",
        "|---|---:|---:|---:|---:|---:|---:|---:|",
    ]
    for name, c in rows:
        ov = "n/a" if math.isnan(c.overlap) else f"{c.overlap:.2f}"
        lines.append(
            f"| {name} | {c.tp} | {c.fp} | {c.fn} | {c.interval.precision:.2f} | "
            f"{c.interval.recall:.2f} | {c.interval.f1:.2f} | {ov} |"
        )
    return "\n".join(lines) + "\n"
