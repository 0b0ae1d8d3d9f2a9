"""Domain types and interval algebra.

Every interval in this package is 1-based and inclusive on both ends. File
formats that use another convention are converted where they are read.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, NamedTuple, Sequence

from .errors import BoundsError, MalformedIntervalError


class AnomalyInterval(NamedTuple):
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def __str__(self) -> str:
        return f"({self.start}, {self.end})"


def _as_interval(item: Any) -> AnomalyInterval:
    if isinstance(item, AnomalyInterval):
        return item
    start, end = item
    return AnomalyInterval(int(start), int(end))


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, non-overlapping, non-adjacent inclusive intervals.

    Build one with :func:`normalize` (or ``IntervalSet.of``); the constructor
    trusts its input.
    """

    intervals: tuple[AnomalyInterval, ...] = ()

    @classmethod
    def of(cls, items: Iterable[Any] = ()) -> "IntervalSet":
        return normalize(items)

    def __iter__(self) -> Iterator[AnomalyInterval]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __getitem__(self, i: int) -> AnomalyInterval:
        return self.intervals[i]

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def to_pairs(self) -> list[list[int]]:
        return [[iv.start, iv.end] for iv in self.intervals]

    def points(self) -> set[int]:
        return {p for iv in self.intervals for p in range(iv.start, iv.end + 1)}


@dataclass(frozen=True)
class TimeSeries:
    values: tuple[float, ...]
    timestamps: tuple[Any, ...] | None = None
    labels: tuple[bool, ...] | None = None
    id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        n = len(self.values)
        if n < 1:
            raise ValueError("a time series needs at least one value")
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != n:
                raise ValueError(f"timestamps length {len(ts)} != values length {n}")
            for i in range(1, n):
                if not ts[i] > ts[i - 1]:
                    raise ValueError(f"timestamps not strictly increasing at position {i + 1}")
            object.__setattr__(self, "timestamps", ts)
        if self.labels is not None:
            lb = tuple(bool(v) for v in self.labels)
            if len(lb) != n:
                raise ValueError(f"labels length {len(lb)} != values length {n}")
            object.__setattr__(self, "labels", lb)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Segment:
    series: TimeSeries
    gt: IntervalSet
    source: dict[str, Any] = field(default_factory=dict)
    context: str = ""
    segment_id: str = ""

    def __post_init__(self) -> None:
        n = len(self.series)
        for iv in self.gt:
            if iv.start < 1 or iv.end > n:
                raise BoundsError(f"gt interval {iv} outside [1, {n}]")
        if not self.segment_id:
            object.__setattr__(self, "segment_id", self.series.id)


def normalize(intervals: Iterable[Any]) -> IntervalSet:
    """Sort and merge overlapping or directly adjacent intervals."""
    items = [_as_interval(x) for x in intervals]
    for iv in items:
        if iv.start > iv.end:
            raise MalformedIntervalError(f"interval {iv} has start > end")
    items.sort()
    merged: list[list[int]] = []
    for s, e in items:
        if merged and s <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return IntervalSet(tuple(AnomalyInterval(s, e) for s, e in merged))


def labels_to_intervals(labels: Sequence[Any]) -> IntervalSet:
    out: list[AnomalyInterval] = []
    start = None
    for i, flag in enumerate(labels, start=1):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append(AnomalyInterval(start, i - 1))
            start = None
    if start is not None:
        out.append(AnomalyInterval(start, len(labels)))
    return IntervalSet(tuple(out))


def intervals_to_labels(intervals: IntervalSet | Iterable[Any], length: int) -> list[bool]:
    labels = [False] * length
    for iv in intervals:
        s, e = _as_interval(iv)
        if s < 1 or e > length or s > e:
            raise BoundsError(f"interval ({s}, {e}) outside [1, {length}]")
        labels[s - 1 : e] = [True] * (e - s + 1)
    return labels


def point_count(intervals: IntervalSet) -> int:
    return sum(iv.end - iv.start + 1 for iv in intervals)


def intersect(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    # two-pointer sweep over sorted inputs
    out: list[AnomalyInterval] = []
    i = j = 0
    xa, xb = a.intervals, b.intervals
    while i < len(xa) and j < len(xb):
        s = max(xa[i].start, xb[j].start)
        e = min(xa[i].end, xb[j].end)
        if s <= e:
            out.append(AnomalyInterval(s, e))
        if xa[i].end < xb[j].end:
            i += 1
        else:
            j += 1
    return normalize(out)


def overlaps(a: AnomalyInterval, b: AnomalyInterval) -> bool:
    return a.start <= b.end and b.start <= a.end
