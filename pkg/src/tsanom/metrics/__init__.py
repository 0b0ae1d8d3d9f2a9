from .affiliation import AffiliationResult, affiliation_metrics
from .interval import (
    PRF,
    IntervalConfusion,
    interval_confusion,
    overlap_score,
    pointwise_metrics,
    prf_from_counts,
    topk_threshold,
)
from .report import CorpusReport, EvalReport, aggregate, evaluate, markdown_table

__all__ = [
    "PRF",
    "AffiliationResult",
    "CorpusReport",
    "EvalReport",
    "IntervalConfusion",
    "affiliation_metrics",
    "aggregate",
    "evaluate",
    "interval_confusion",
    "markdown_table",
    "overlap_score",
    "pointwise_metrics",
    "prf_from_counts",
    "topk_threshold",
]
