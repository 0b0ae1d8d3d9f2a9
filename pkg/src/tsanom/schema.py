"""Parsing and serializing the tagged model output format.

A model answer is two lines::

    <anomaly>True</anomaly><index>(10,20)</index><index>(40,45)</index>
    <think>Step 1: ... Step 2: ... Step 3: ...</think>

Judge replies are three labeled lines (``VISUAL:``, ``AXIS:``, ``CLARITY:``)
and pairwise replies carry a single ``A`` / ``B`` / ``TIE`` token.
"""

from __future__ import annotations

import bisect
import enum
import math
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Sequence

from .core import AnomalyInterval, IntervalSet, TimeSeries, normalize
from .errors import JudgeFormatError, SchemaError, ScoreRangeError, VerdictFormatError
from .ingest import format_timestamp

_ANOMALY_RE = re.compile(r"<anomaly>\s*(.*?)\s*</anomaly>", re.IGNORECASE | re.DOTALL)
_INDEX_RE = re.compile(r"<index>\s*(.*?)\s*</index>", re.IGNORECASE | re.DOTALL)
_THINK_RE = re.compile(r"<think>(.*?)(?:</think>|$)", re.IGNORECASE | re.DOTALL)
_STEP_RE = re.compile(r"step\s*(\d+)\s*:", re.IGNORECASE)
_INT_RE = re.compile(r"^[+-]?\d+$")
_DEC_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_TS_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d")


@dataclass(frozen=True)
class ReasoningTrace:
    steps: tuple[str, ...] = ()
    raw: str = ""


@dataclass(frozen=True)
class CandidateOutput:
    decision: bool
    intervals: IntervalSet = IntervalSet()
    intervals_raw: tuple[tuple[str, str], ...] = ()
    reasoning: ReasoningTrace = ReasoningTrace()
    generator_id: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.decision and self.intervals:
            raise SchemaError("decision False must carry no intervals")


@dataclass(frozen=True)
class JudgeScores:
    visual: float
    axis: float
    clarity: float

    def __post_init__(self) -> None:
        for name in ("visual", "axis", "clarity"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ScoreRangeError(f"{name} score {v} outside [0, 1]")


class Verdict(str, enum.Enum):
    A = "A"
    B = "B"
    TIE = "Tie"


# --------------------------------------------------------------------------
# reasoning
# --------------------------------------------------------------------------


def split_steps(raw: str) -> tuple[str, ...]:
    """Split a think body on ``Step k:`` markers; no markers gives no steps."""
    marks = list(_STEP_RE.finditer(raw))
    steps = []
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(raw)
        steps.append(raw[m.end():end].strip())
    return tuple(steps)


# --------------------------------------------------------------------------
# interval tokens
# --------------------------------------------------------------------------


def _parse_token(token: str) -> int | float | datetime:
    tok = token.strip().strip("'\"")
    if _INT_RE.match(tok):
        return int(tok)
    if _DEC_RE.match(tok):
        return float(tok)
    for fmt in _TS_FORMATS:
        try:
            return datetime.strptime(tok, fmt)
        except ValueError:
            continue
    raise SchemaError(f"unparsable interval token {token!r}")


def _nearest_index(target: Any, stamps: Sequence[Any]) -> int:
    pos = bisect.bisect_left(stamps, target)
    if pos == 0:
        return 1
    if pos == len(stamps):
        return len(stamps)
    before, after = stamps[pos - 1], stamps[pos]
    # ties go to the earlier timestamp
    if _gap(target, before) <= _gap(after, target):
        return pos
    return pos + 1


def _gap(a: Any, b: Any) -> float:
    d = a - b
    return d.total_seconds() if hasattr(d, "total_seconds") else float(d)


def _token_to_index(value: int | float | datetime, series: TimeSeries | None) -> int:
    if isinstance(value, datetime):
        stamps = series.timestamps if series is not None else None
        if not stamps or not isinstance(stamps[0], datetime):
            raise SchemaError(f"timestamp token {value} needs a series with datetime timestamps")
        return _nearest_index(value, stamps)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SchemaError(f"non-finite interval token {value}")
        return int(math.floor(value + 0.5))
    return value


def map_timestamps_to_indices(tokens: tuple[str, str], series: TimeSeries | None,
                              warnings: list[str] | None = None) -> AnomalyInterval:
    """Map an (start, end) token pair to 1-based indices on ``series``.

    Integer tokens pass through unchanged, timestamp tokens snap to the
    nearest stored timestamp. The result is clamped to ``[1, T]`` and
    swapped endpoints are reordered with a warning.
    """
    s = _token_to_index(_parse_token(tokens[0]), series)
    e = _token_to_index(_parse_token(tokens[1]), series)
    if series is not None:
        n = len(series)
        s2, e2 = min(max(s, 1), n), min(max(e, 1), n)
        if (s2, e2) != (s, e) and warnings is not None:
            warnings.append(f"clamped ({s}, {e}) to [1, {n}]")
        s, e = s2, e2
    if s > e:
        if warnings is not None:
            warnings.append(f"swapped endpoints ({s}, {e})")
        s, e = e, s
    return AnomalyInterval(s, e)


def _split_pair(body: str) -> tuple[str, str]:
    inner = body.strip()
    if inner.startswith(("(", "[")) and inner.endswith((")", "]")):
        inner = inner[1:-1]
    parts = inner.split(",")
    if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
        raise SchemaError(f"unparsable interval token {body!r}")
    return parts[0].strip(), parts[1].strip()


# --------------------------------------------------------------------------
# structured output
# --------------------------------------------------------------------------


def parse_structured_output(text: str, axis_context: TimeSeries | None = None,
                            generator_id: str = "") -> CandidateOutput:
    m = _ANOMALY_RE.search(text)
    if m is None:
        raise SchemaError("missing <anomaly> tag")
    flag = m.group(1).strip().lower()
    if flag not in ("true", "false"):
        raise SchemaError(f"<anomaly> must be True or False, got {m.group(1)!r}")
    decision = flag == "true"
    think = _THINK_RE.search(text)
    # index tags inside the think body are prose, not predictions
    head = text[: think.start()] if think else text
    bodies = _INDEX_RE.findall(head)
    if not decision and bodies:
        raise SchemaError("<anomaly>False</anomaly> must not be followed by <index> tags")

    warnings: list[str] = []
    raw_pairs = tuple(_split_pair(b) for b in bodies)
    mapped = [map_timestamps_to_indices(p, axis_context, warnings) for p in raw_pairs]
    if decision and not mapped:
        raise SchemaError("<anomaly>True</anomaly> without any parseable <index> pair")
    intervals = normalize(mapped)
    if any(mapped[i] > mapped[i + 1] for i in range(len(mapped) - 1)):
        warnings.append("intervals were out of order")
    if len(intervals) < len(mapped) and len(set(mapped)) == len(mapped):
        warnings.append("overlapping or adjacent intervals were merged")
    elif len(set(mapped)) < len(mapped):
        warnings.append("duplicate intervals collapsed")

    raw = think.group(1).strip() if think else ""
    return CandidateOutput(
        decision=decision,
        intervals=intervals,
        intervals_raw=raw_pairs,
        reasoning=ReasoningTrace(steps=split_steps(raw), raw=raw),
        generator_id=generator_id,
        warnings=tuple(warnings),
    )


def format_interval(iv: AnomalyInterval, series: TimeSeries | None = None, axis_mode: str = "index") -> str:
    if axis_mode == "timestamp" and series is not None and series.timestamps is not None:
        s = format_timestamp(series.timestamps[iv.start - 1])
        e = format_timestamp(series.timestamps[iv.end - 1])
        return f"({s}, {e})"
    return f"({iv.start},{iv.end})"


def serialize_structured_output(c: CandidateOutput, series: TimeSeries | None = None,
                                axis_mode: str = "index") -> str:
    line1 = f"<anomaly>{'True' if c.decision else 'False'}</anomaly>"
    if c.decision:
        line1 += "".join(f"<index>{format_interval(iv, series, axis_mode)}</index>" for iv in c.intervals)
    if c.reasoning.steps:
        body = " ".join(f"Step {k}: {s}" for k, s in enumerate(c.reasoning.steps, start=1))
    else:
        body = c.reasoning.raw
    return f"{line1}\n<think>{body}</think>"


# --------------------------------------------------------------------------
# judge and pairwise replies
# --------------------------------------------------------------------------

_NUM = r"([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
_JUDGE_RES = {
    "visual": re.compile(r"\bVISUAL\s*:\s*" + _NUM, re.IGNORECASE),
    "axis": re.compile(r"\bAXIS\s*:\s*" + _NUM, re.IGNORECASE),
    "clarity": re.compile(r"\bCLARITY\s*:\s*" + _NUM, re.IGNORECASE),
}


def parse_judge_scores(text: str) -> JudgeScores:
    found = {}
    for name, rx in _JUDGE_RES.items():
        m = rx.search(text)
        if m is None:
            raise JudgeFormatError(f"judge reply lacks a {name.upper()}: line")
        found[name] = float(m.group(1))
    return JudgeScores(**found)


_VERDICT_RE = re.compile(r"(?<![A-Za-z0-9])(A|B|TIE|Tie|tie)(?![A-Za-z0-9])")


def parse_pairwise_verdict(text: str) -> Verdict:
    tokens = _VERDICT_RE.findall(text)
    if len(tokens) != 1:
        raise VerdictFormatError(f"expected exactly one verdict token, found {len(tokens)}: {text[:200]!r}")
    tok = tokens[0].upper()
    return Verdict.TIE if tok == "TIE" else Verdict(tok)


# --------------------------------------------------------------------------
# candidate store records
# --------------------------------------------------------------------------


def candidate_to_record(segment_id: str, c: CandidateOutput | None, raw_text: str,
                        generator_id: str, error: str | None = None) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "segment_id": segment_id,
        "generator_id": generator_id,
        "raw_text": raw_text,
        "decision": c.decision if c else None,
        "intervals": c.intervals.to_pairs() if c else [],
        "reasoning_steps": list(c.reasoning.steps) if c else [],
        "reasoning_raw": c.reasoning.raw if c else "",
        "warnings": list(c.warnings) if c else [],
        "status": "ok" if error is None else "parse_error",
    }
    if error is not None:
        rec["error"] = error
    return rec


def candidate_from_record(rec: dict[str, Any]) -> CandidateOutput | None:
    if rec.get("status", "ok") != "ok":
        return None
    return CandidateOutput(
        decision=bool(rec["decision"]),
        intervals=normalize(tuple(p) for p in rec.get("intervals", [])),
        reasoning=ReasoningTrace(steps=tuple(rec.get("reasoning_steps", [])), raw=rec.get("reasoning_raw", "")),
        generator_id=rec["generator_id"],
        warnings=tuple(rec.get("warnings", [])),
    )
