"""Loading series from disk, segmenting them, and synthesizing test fixtures."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import (
    AnomalyInterval,
    IntervalSet,
    Segment,
    TimeSeries,
    labels_to_intervals,
    normalize,
)
from .errors import IngestError, SynthSpecError

log = logging.getLogger(__name__)

TIMESTAMP_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d")


# --------------------------------------------------------------------------
# loading
# --------------------------------------------------------------------------


def parse_timestamp(token: Any) -> Any:
    """Numbers pass through; strings become ``datetime`` (or numbers when numeric)."""
    if isinstance(token, (int, float, datetime)) and not isinstance(token, bool):
        return token
    text = str(token).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    for fmt in TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unrecognized timestamp {text!r}")


def format_timestamp(ts: Any) -> Any:
    if isinstance(ts, datetime):
        return ts.strftime("%Y-%m-%d %H:%M:%S")
    return ts


def _parse_label(token: str, row: int, path: str) -> bool:
    token = token.strip()
    if token not in ("0", "1"):
        raise IngestError(f"label must be 0 or 1, got {token!r}", row=row, path=path)
    return token == "1"


def _load_csv(path: Path) -> tuple[TimeSeries, str]:
    values: list[float] = []
    stamps: list[Any] = []
    labels: list[bool] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        if "value" not in cols:
            raise IngestError("missing 'value' column", path=str(path))
        reader.fieldnames = cols
        has_ts = "timestamp" in cols
        has_lb = "label" in cols
        for row_no, row in enumerate(reader, start=1):
            try:
                v = float(row["value"])
            except (TypeError, ValueError):
                raise IngestError(f"unparsable value {row['value']!r}", row=row_no, path=str(path)) from None
            if not math.isfinite(v):
                raise IngestError(f"non-finite value {row['value']!r}", row=row_no, path=str(path))
            values.append(v)
            if has_ts:
                try:
                    ts = parse_timestamp(row["timestamp"])
                except ValueError as exc:
                    raise IngestError(str(exc), row=row_no, path=str(path)) from None
                if stamps and not ts > stamps[-1]:
                    raise IngestError("timestamps not strictly increasing", row=row_no, path=str(path))
                stamps.append(ts)
            if has_lb:
                labels.append(_parse_label(row["label"] or "", row_no, str(path)))
    if not values:
        raise IngestError("no data rows", path=str(path))
    series = TimeSeries(
        values=tuple(values),
        timestamps=tuple(stamps) if has_ts else None,
        labels=tuple(labels) if has_lb else None,
        id=path.stem,
    )
    return series, ""


def _load_manifest(path: Path) -> tuple[TimeSeries, str]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"invalid JSON: {exc}", path=str(path)) from None
    if not isinstance(doc, dict) or "values" not in doc:
        raise IngestError("manifest must be an object with 'values'", path=str(path))
    values = doc["values"]
    n = len(values)
    for i, v in enumerate(values, start=1):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise IngestError(f"unparsable value {v!r}", row=i, path=str(path))
    stamps = None
    if doc.get("timestamps") is not None:
        raw = doc["timestamps"]
        if len(raw) != n:
            raise IngestError(f"timestamps length {len(raw)} != values length {n}", path=str(path))
        stamps = []
        for i, t in enumerate(raw, start=1):
            try:
                ts = parse_timestamp(t)
            except ValueError as exc:
                raise IngestError(str(exc), row=i, path=str(path)) from None
            if stamps and not ts > stamps[-1]:
                raise IngestError("timestamps not strictly increasing", row=i, path=str(path))
            stamps.append(ts)
    labels = None
    if doc.get("labels") is not None:
        raw = doc["labels"]
        if len(raw) != n:
            raise IngestError(f"labels length {len(raw)} != values length {n}", path=str(path))
        labels = []
        for i, lb in enumerate(raw, start=1):
            if lb not in (0, 1) or isinstance(lb, float) and not lb.is_integer():
                raise IngestError(f"label must be 0 or 1, got {lb!r}", row=i, path=str(path))
            labels.append(bool(lb))
    series = TimeSeries(
        values=tuple(values),
        timestamps=tuple(stamps) if stamps is not None else None,
        labels=tuple(labels) if labels is not None else None,
        id=str(doc.get("id") or path.stem),
    )
    return series, str(doc.get("context") or "")


def load_series(path: str | Path, format: str | None = None) -> TimeSeries:
    """Read one series from a ``csv`` file or a ``json_manifest`` file."""
    return load_series_with_context(path, format)[0]


def load_series_with_context(path: str | Path, format: str | None = None) -> tuple[TimeSeries, str]:
    path = Path(path)
    if format is None:
        format = "json_manifest" if path.suffix.lower() == ".json" else "csv"
    if not path.is_file():
        raise IngestError("file not found", path=str(path))
    if format == "csv":
        return _load_csv(path)
    if format == "json_manifest":
        return _load_manifest(path)
    raise IngestError(f"unknown format {format!r}", path=str(path))


def load_dataset(root: str | Path, format: str | None = None) -> list[tuple[TimeSeries, str]]:
    """Load every ``*.csv`` / ``*.json`` under ``root`` (sorted by name)."""
    root = Path(root)
    if root.is_file():
        return [load_series_with_context(root, format)]
    if not root.is_dir():
        raise IngestError("dataset path does not exist", path=str(root))
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".csv", ".json"))
    if not files:
        raise IngestError("dataset directory contains no .csv or .json files", path=str(root))
    return [load_series_with_context(p, format) for p in files]


# --------------------------------------------------------------------------
# segmentation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentationCriteria:
    max_anomaly_ratio: float = 0.10
    target_ratio_range: tuple[float, float] = (0.01, 0.10)
    center_range: tuple[float, float] = (0.30, 0.70)
    min_length: int = 200

    def __post_init__(self) -> None:
        lo, hi = self.target_ratio_range
        if not (0 < lo < hi <= self.max_anomaly_ratio <= 1):
            raise ValueError("need 0 < target low < target high <= max_anomaly_ratio <= 1")
        clo, chi = self.center_range
        if not (0 <= clo < chi <= 1):
            raise ValueError("need 0 <= center low < center high <= 1")
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")


def _exact(x: float) -> Fraction:
    # config values like 0.7 mean the decimal 7/10, not the nearest binary float
    return Fraction(str(x))


@dataclass(frozen=True)
class _Bounds:
    """Criteria as exact fractions so boundary cases compare without rounding."""

    lo: Fraction
    hi: Fraction
    cap: Fraction
    clo: Fraction
    chi: Fraction
    min_length: int

    @classmethod
    def of(cls, c: SegmentationCriteria) -> "_Bounds":
        return cls(_exact(c.target_ratio_range[0]), _exact(c.target_ratio_range[1]), _exact(c.max_anomaly_ratio),
                   _exact(c.center_range[0]), _exact(c.center_range[1]), c.min_length)

    def ratio_ok(self, k: int, w: int) -> bool:
        r = Fraction(k, w)
        return self.lo < r < self.hi and r <= self.cap

    def center_ok(self, pos_sum: int, k: int, w: int) -> bool:
        # pos_sum: sum of 1-based local positions of the k anomalous points
        return self.clo <= Fraction(pos_sum, k * w) <= self.chi


def check_segment_criteria(gt: IntervalSet, length: int, criteria: SegmentationCriteria) -> list[str]:
    """Return the list of violated criteria for a segment (empty means valid)."""
    b = _Bounds.of(criteria)
    problems = []
    if length < criteria.min_length:
        problems.append(f"length {length} < {criteria.min_length}")
    k = sum(iv.length for iv in gt)
    if not k:
        return problems + ["no anomaly"]
    if not b.ratio_ok(k, length):
        lo, hi = criteria.target_ratio_range
        problems.append(f"anomaly ratio {k / length:.4f} outside ({lo}, {hi})")
    pos_sum = sum((iv.start + iv.end) * iv.length // 2 for iv in gt)
    if not b.center_ok(pos_sum, k, length):
        clo, chi = criteria.center_range
        problems.append(f"anomaly center {pos_sum / k / length:.4f} outside [{clo}, {chi}]")
    return problems


def _window_ok(a: int, b: int, lab: np.ndarray, cnt: list[int], wsum: list[int], bounds: _Bounds) -> bool:
    # a, b are 1-based inclusive; cnt/wsum are prefix sums with a leading zero
    n = len(lab)
    if a > 1 and lab[a - 2] and lab[a - 1]:
        return False
    if b < n and lab[b - 1] and lab[b]:
        return False
    w = b - a + 1
    if w < bounds.min_length:
        return False
    k = cnt[b] - cnt[a - 1]
    if k == 0 or not bounds.ratio_ok(k, w):
        return False
    return bounds.center_ok(wsum[b] - wsum[a - 1] - k * (a - 1), k, w)


def segment_series(series: TimeSeries, criteria: SegmentationCriteria | None = None,
                   context: str = "") -> list[Segment]:
    """Cut non-overlapping windows around labeled anomalies.

    For each ground-truth interval a window is grown symmetrically around it
    (shifted inward at the series bounds) until every criterion holds; the
    first feasible window wins. Windows never cut through a labeled run.
    """
    criteria = criteria or SegmentationCriteria()
    if series.labels is None:
        return []
    gt_all = labels_to_intervals(series.labels)
    if not gt_all:
        return []
    n = len(series)
    lab = np.asarray(series.labels, dtype=bool)
    idx = np.arange(1, n + 1, dtype=np.int64)
    cnt = [0] + np.cumsum(lab, dtype=np.int64).tolist()
    wsum = [0] + np.cumsum(idx * lab, dtype=np.int64).tolist()
    bounds = _Bounds.of(criteria)

    segments: list[Segment] = []
    floor_ = 1
    for iv in gt_all:
        if iv.start < floor_:
            continue
        length = iv.length
        found = None
        for w in range(max(criteria.min_length, length), n - floor_ + 2):
            pad = w - length
            a = iv.start - pad // 2
            b = iv.end + (pad - pad // 2)
            if a < floor_:
                b += floor_ - a
                a = floor_
            if b > n:
                a -= b - n
                b = n
            if a < floor_:
                break
            if _window_ok(a, b, lab, cnt, wsum, bounds):
                found = (a, b)
                break
        if found is None:
            continue
        a, b = found
        local = TimeSeries(
            values=series.values[a - 1 : b],
            timestamps=series.timestamps[a - 1 : b] if series.timestamps is not None else None,
            labels=series.labels[a - 1 : b],
            id=f"{series.id}:{a}-{b}",
        )
        segments.append(
            Segment(
                series=local,
                gt=labels_to_intervals(local.labels),
                source={"dataset_id": series.id, "offset_start": a, "offset_end": b},
                context=context,
                segment_id=local.id,
            )
        )
        floor_ = b + 1
    return segments


# --------------------------------------------------------------------------
# consensus filtering
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsensusPolicy:
    # a candidate "disagrees" when its range-F1 against gt is <= this value
    f1_threshold: float = 0.0


@dataclass(frozen=True)
class ConsensusDecision:
    keep: bool
    rationale: list[dict[str, Any]] = field(default_factory=list)

    @property
    def decision(self) -> str:
        return "keep" if self.keep else "drop"


def consensus_filter(segment: Segment, candidates: Sequence[Any],
                     policy: ConsensusPolicy | None = None) -> ConsensusDecision:
    """Drop a segment when a strict majority of candidates miss or contradict its labels.

    ``None`` entries stand for candidates whose output could not be parsed and
    count as failures.
    """
    from .reward import score_anomaly_accuracy

    policy = policy or ConsensusPolicy()
    if not candidates:
        raise ValueError("consensus_filter needs at least one candidate")
    verdicts = []
    failures = 0
    for c in candidates:
        if c is None:
            verdicts.append({"generator_id": None, "verdict": "fail", "reason": "unparseable"})
            failures += 1
            continue
        if not c.decision:
            verdicts.append({"generator_id": c.generator_id, "verdict": "fail", "reason": "no anomaly predicted"})
            failures += 1
            continue
        f1 = score_anomaly_accuracy(c.intervals, segment.gt)
        if f1 <= policy.f1_threshold:
            verdicts.append({"generator_id": c.generator_id, "verdict": "fail",
                             "reason": f"range-F1 {f1:.4f} <= {policy.f1_threshold}"})
            failures += 1
        else:
            verdicts.append({"generator_id": c.generator_id, "verdict": "agree", "reason": f"range-F1 {f1:.4f}"})
    return ConsensusDecision(keep=not (2 * failures > len(candidates)), rationale=verdicts)


# --------------------------------------------------------------------------
# synthetic series
# --------------------------------------------------------------------------

ANOMALY_KINDS = ("spike", "level_shift", "amplitude_change", "frequency_change")


@dataclass(frozen=True)
class Waveform:
    kind: str = "constant"  # constant | sine | random_walk
    level: float = 0.0
    period: float = 50.0
    amplitude: float = 1.0
    step_scale: float = 1.0


@dataclass(frozen=True)
class InjectedAnomaly:
    kind: str = "spike"
    start: int = 1
    end: int | None = None  # inclusive; defaults to start
    magnitude: float = 10.0

    @property
    def last(self) -> int:
        return self.start if self.end is None else self.end


@dataclass(frozen=True)
class SynthSpec:
    length: int
    base: Waveform = Waveform()
    noise_sigma: float = 0.0
    anomaly: InjectedAnomaly = InjectedAnomaly()
    seed: int = 0
    id: str = ""
    context: str = ""


def synth_series(spec: SynthSpec) -> Segment:
    """Generate a labeled series with one injected anomaly; a pure function of ``spec``."""
    n = spec.length
    an = spec.anomaly
    if n < 1:
        raise SynthSpecError("length must be >= 1")
    if not (1 <= an.start <= an.last <= n):
        raise SynthSpecError(f"anomaly span ({an.start}, {an.last}) outside [1, {n}]")
    if an.kind not in ANOMALY_KINDS:
        raise SynthSpecError(f"unknown anomaly kind {an.kind!r}")
    if spec.noise_sigma < 0:
        raise SynthSpecError("noise_sigma must be >= 0")
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n, dtype=np.float64)
    b = spec.base
    if b.kind == "constant":
        base = np.full(n, b.level, dtype=np.float64)
    elif b.kind == "sine":
        base = b.level + b.amplitude * np.sin(2 * np.pi * t / b.period)
    elif b.kind == "random_walk":
        base = b.level + np.cumsum(rng.normal(0.0, b.step_scale, n))
    else:
        raise SynthSpecError(f"unknown base waveform {b.kind!r}")
    noise = rng.normal(0.0, spec.noise_sigma, n) if spec.noise_sigma > 0 else np.zeros(n)

    sl = slice(an.start - 1, an.last)
    values = base.copy()
    if an.kind in ("spike", "level_shift"):
        values[sl] += an.magnitude
    elif an.kind == "amplitude_change":
        center = b.level
        values[sl] = center + (values[sl] - center) * an.magnitude
    else:  # frequency_change
        if b.kind != "sine":
            raise SynthSpecError("frequency_change needs a sine base")
        values[sl] = b.level + b.amplitude * np.sin(2 * np.pi * t[sl] * an.magnitude / b.period)
    values = values + noise

    labels = np.zeros(n, dtype=bool)
    labels[sl] = True
    sid = spec.id or f"synth-{spec.seed}"
    series = TimeSeries(values=tuple(values.tolist()), labels=tuple(labels.tolist()), id=sid)
    return Segment(
        series=series,
        gt=labels_to_intervals(series.labels),
        source={"dataset_id": "synthetic", "offset_start": 1, "offset_end": n, "seed": spec.seed},
        context=spec.context,
        segment_id=sid,
    )


# --------------------------------------------------------------------------
# segment store (JSONL)
# --------------------------------------------------------------------------


def segment_to_record(seg: Segment) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "segment_id": seg.segment_id,
        "source": seg.source,
        "values": list(seg.series.values),
        "gt_intervals": seg.gt.to_pairs(),
        "context": seg.context,
    }
    if seg.series.timestamps is not None:
        rec["timestamps"] = [format_timestamp(t) for t in seg.series.timestamps]
    return rec


def segment_from_record(rec: dict[str, Any]) -> Segment:
    values = rec["values"]
    stamps = rec.get("timestamps")
    gt = normalize(AnomalyInterval(int(s), int(e)) for s, e in rec.get("gt_intervals", []))
    labels = [False] * len(values)
    for iv in gt:
        labels[iv.start - 1 : iv.end] = [True] * iv.length
    series = TimeSeries(
        values=tuple(values),
        timestamps=tuple(parse_timestamp(t) for t in stamps) if stamps is not None else None,
        labels=tuple(labels),
        id=rec["segment_id"],
    )
    return Segment(series=series, gt=gt, source=rec.get("source") or {}, context=rec.get("context") or "",
                   segment_id=rec["segment_id"])


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    tmp.replace(path)


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON: {exc}", row=line_no, path=str(path)) from None
    return out


def write_segment_store(path: str | Path, segments: Iterable[Segment], extra: dict[str, Any] | None = None) -> None:
    recs = []
    for seg in sorted(segments, key=lambda s: s.segment_id):
        rec = segment_to_record(seg)
        if extra:
            rec.update(extra)
        recs.append(rec)
    write_jsonl(path, recs)


def read_segment_store(path: str | Path) -> list[Segment]:
    return [segment_from_record(r) for r in read_jsonl(path)]


def synthetic_corpus(count: int, length: int = 1000, seed: int = 0) -> list[tuple[TimeSeries, str]]:
    """Labeled fixture series cycling through every base waveform and anomaly kind."""
    rng = np.random.default_rng(seed)
    bases = ("sine", "constant", "random_walk")
    out = []
    for k in range(count):
        base_kind = bases[k % len(bases)]
        kind = ANOMALY_KINDS[k % len(ANOMALY_KINDS)]
        if kind == "frequency_change":
            base_kind = "sine"
        span = int(rng.integers(max(1, length // 100), max(2, length // 20)))
        start = int(rng.integers(int(0.4 * length), int(0.6 * length) - span))
        magnitude = {"spike": 8.0, "level_shift": 4.0, "amplitude_change": 3.0, "frequency_change": 4.0}[kind]
        spec = SynthSpec(
            length=length,
            base=Waveform(kind=base_kind, level=10.0, period=float(rng.integers(20, 80)),
                          amplitude=2.0, step_scale=0.05),
            noise_sigma=0.1,
            anomaly=InjectedAnomaly(kind=kind, start=start, end=start + span - 1, magnitude=magnitude),
            seed=int(rng.integers(0, 2**31 - 1)),
            id=f"synth-{k:04d}",
            context=f"synthetic {base_kind} series with an injected {kind.replace('_', ' ')}",
        )
        seg = synth_series(spec)
        out.append((seg.series, seg.context))
    return out
