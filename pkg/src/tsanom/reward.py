"""Composite candidate reward, best-candidate selection and win-rate bookkeeping."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Sequence

from .core import IntervalSet, intersect, point_count
from .errors import SelectionError
from .schema import CandidateOutput, JudgeScores, Verdict


@dataclass(frozen=True)
class RewardWeights:
    ano: float = 0.3
    vis: float = 0.3
    axi: float = 0.1
    cla: float = 0.3

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"reward weight {k} must be >= 0, got {v}")


@dataclass(frozen=True)
class RewardBreakdown:
    s_ano: float
    s_vis: float
    s_axi: float
    s_cla: float
    total: float
    generator_id: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def score_anomaly_accuracy(pred: IntervalSet, gt: IntervalSet) -> float:
    """Length-weighted range F1: harmonic mean of point-mass precision and recall."""
    n_pred = point_count(pred)
    n_gt = point_count(gt)
    if n_pred == 0:
        return 1.0 if n_gt == 0 else 0.0
    if n_gt == 0:
        return 0.0
    hit = point_count(intersect(pred, gt))
    if hit == 0:
        return 0.0
    precision = hit / n_pred
    recall = hit / n_gt
    return 2 * precision * recall / (precision + recall)


def weighted_total(s_ano: float, s_vis: float, s_axi: float, s_cla: float, w: RewardWeights) -> float:
    return w.ano * s_ano + w.vis * s_vis + w.axi * s_axi + w.cla * s_cla


def score_candidate(c: CandidateOutput, gt: IntervalSet, judge: JudgeScores,
                    w: RewardWeights | None = None) -> RewardBreakdown:
    w = w or RewardWeights()
    s_ano = score_anomaly_accuracy(c.intervals, gt)
    return RewardBreakdown(
        s_ano=s_ano,
        s_vis=judge.visual,
        s_axi=judge.axis,
        s_cla=judge.clarity,
        total=weighted_total(s_ano, judge.visual, judge.axis, judge.clarity, w),
        generator_id=c.generator_id,
    )


def _rank_key(b: RewardBreakdown) -> tuple[float, float, str]:
    return (-b.total, -b.s_ano, b.generator_id)


def select_best(breakdowns: Sequence[RewardBreakdown]) -> tuple[int, list[int]]:
    """Index of the winner plus the full ranking (indices, best first).

    Ties on the total go to the higher anomaly-accuracy score, then to the
    lexicographically smallest generator id.
    """
    if not breakdowns:
        raise SelectionError("select_best needs at least one breakdown")
    ranking = sorted(range(len(breakdowns)), key=lambda i: (_rank_key(breakdowns[i]), i))
    return ranking[0], ranking


@dataclass(frozen=True)
class CompositionRow:
    generator_id: str
    count: int
    percent: float


def composition_report(selections: Iterable[tuple[str, str]]) -> list[CompositionRow]:
    """Per-generator share of the selected supervision targets, in first-seen order."""
    counts: Counter[str] = Counter()
    order: list[str] = []
    for _segment_id, gen in selections:
        if gen not in counts:
            order.append(gen)
        counts[gen] += 1
    total = sum(counts.values())
    return [CompositionRow(g, counts[g], 100.0 * counts[g] / total) for g in order]


def format_composition(rows: Sequence[CompositionRow]) -> str:
    if not rows:
        return "(no selections)\n"
    head = "| | " + " | ".join(r.generator_id for r in rows) + " |"
    sep = "|---" * (len(rows) + 1) + "|"
    cnt = "| Count | " + " | ".join(str(r.count) for r in rows) + " |"
    pct = "| Percent | " + " | ".join(f"{r.percent:.1f}%" for r in rows) + " |"
    return "\n".join([head, sep, cnt, pct]) + "\n"


@dataclass(frozen=True)
class WinRate:
    a_label: str
    b_label: str
    a_win: float
    b_win: float
    tie: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0

    def rounded(self) -> tuple[float, float, float]:
        return (round(self.a_win, 1), round(self.b_win, 1), round(self.tie, 1))

    def to_markdown(self) -> str:
        if self.empty:
            return "No comparisons (count 0).\n"
        a, b, t = self.rounded()
        return (
            f"| Outcome | Share |\n|---|---|\n"
            f"| {self.a_label} preferred | {a:.1f}% |\n"
            f"| {self.b_label} preferred | {b:.1f}% |\n"
            f"| Tie | {t:.1f}% |\n\n"
            f"Comparisons: {self.count}\n"
        )


def win_rate(verdicts: Sequence[Verdict], a_label: str = "A", b_label: str = "B") -> WinRate:
    n = len(verdicts)
    if n == 0:
        return WinRate(a_label, b_label, 0.0, 0.0, 0.0, 0)
    c = Counter(Verdict(v) for v in verdicts)
    return WinRate(a_label, b_label, 100.0 * c[Verdict.A] / n, 100.0 * c[Verdict.B] / n,
                   100.0 * c[Verdict.TIE] / n, n)


def combine_orderings(forward: Verdict, backward: Verdict) -> Verdict:
    """Reconcile verdicts from (A, B) order and swapped (B, A) order.

    ``backward`` is expressed in the swapped frame, so a consistent preference
    for the first explanation reads (A, B). Anything inconsistent is a tie.
    """
    unswapped = {Verdict.A: Verdict.B, Verdict.B: Verdict.A, Verdict.TIE: Verdict.TIE}[Verdict(backward)]
    if Verdict(forward) == unswapped:
        return Verdict(forward)
    return Verdict.TIE
