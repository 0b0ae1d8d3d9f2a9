"""Prompt builders for candidate elicitation, detection, judging and pairwise comparison.

Templates are filled with plain ``str.replace`` so braces inside contexts or
reasoning text are never interpreted.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import IntervalSet, TimeSeries
from ..schema import format_interval


@dataclass(frozen=True)
class PromptText:
    user: str
    system: str | None = None
    image: bytes | None = None

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("prompt user text must be non-empty")


_HEAD = """You are given a time-series plot image (not raw values) and a short context:

{ts_context}

Your task is to (i) decide whether anomalies are present, (ii) localize them as inclusive
index/timestamp intervals exactly as shown on the plot axes, and (iii) provide concise,
step-by-step reasoning grounded in what is visible.
If citing numbers, estimate only from axis ticks or labels.

Please follow these steps:

- Give a short image description relevant to anomaly detection, focusing on axes type,
visible trend or seasonality, and any obvious spikes, drops, or level shifts.
- Provide a brief rationale distinguishing normal behavior (baseline, seasonality,
variance) from visible deviations. Numeric estimates should be derived only from axis labels
or tick spacing and noted approximately.
- Generate a simplified step-by-step reasoning process consisting of 3-4 numbered steps.
Each step must be specific, non-redundant, and grounded in visual evidence.
- Present the final decision using the STRICT schema below.

STRICT schema and rules:
- Intervals are inclusive of endpoints.
- Use x-axis values as shown (timestamps or integer indices); do not invent precision.
- Merge visually contiguous anomalous points into a single interval; intervals must be sorted
and non-overlapping.
- When anomalies exist, wrap each (start, end) pair in its own
<index>...</index> tag.
- When no anomalies exist, output only
<anomaly>False</anomaly>
with no <index> tags.

Required section headings (use exactly):
- Image Description:
  - (1-3 sentences about the plot relevant to anomalies.)
- Rationales:
  - (Concise bullet 1: expected behavior from context.)
  - (Concise bullet 2: visible deviations with axis-aware estimates when needed.)
  - (Optional concise bullet 3.)
- Lets think step by step.
  - Step 1: (Identify axes scale and baseline; note any seasonality.)
  - Step 2: (Locate candidate abnormal regions and justify deviations.)
  - Step 3: (Consolidate adjacent points into inclusive intervals; map to x-axis values; ensure sorted, non-overlapping.)
"""

_GT_SECTION = """- The anomaly is:
  - {gt_anomaly_intervals}
"""

_TAIL = """
Final output format (produce exactly two lines, then stop):
- <anomaly>True/False</anomaly><index>(start_1,end_1)</index>,<index>(start_2,end_2)</index>
- <think>Step 1: ... Step 2: ... Step 3: ...</think>
"""

ELICITATION_TEMPLATE = _HEAD + _GT_SECTION + _TAIL
DETECTION_TEMPLATE = _HEAD + _TAIL

JUDGE_TEMPLATE = """You are evaluating a model's reasoning for time-series anomaly detection. Use the attached image and the inputs below.

Inputs:
- Context: {context}
- Decision (Line 1): {decision}
- Reasoning (inside <think>): {reasoning}

Evaluate along three dimensions:
1. Visual Groundedness: How well does the reasoning reference visible patterns (spikes, drops, shifts) in the plot?
2. Axis Awareness: Are timestamps/indices and value ranges consistent with the actual axes? Penalize hallucinated precision.
3. Clarity: Is the reasoning logically ordered, non-redundant, and clearly connected from observation to conclusion?

Return your scores as three numbers in this exact format:
VISUAL: <number in [0,1]>
AXIS: <number in [0,1]>
CLARITY: <number in [0,1]>

Do NOT add any other text, explanation, or formatting. Only those three lines.
"""

PAIRWISE_TEMPLATE = """You are comparing two explanations of the same time-series anomaly decision. Use the attached plot image and the context below.

Context: {context}

Explanation A:
{explanation_a}

Explanation B:
{explanation_b}

Judge which explanation is better based on visual groundedness (references patterns visible in the plot), axis consistency (timestamps/indices and value ranges agree with the plot axes), and clarity (logically ordered, non-redundant, connected from observation to conclusion).

Answer with exactly one token: A, B, or TIE. Do not add any other text.
"""


def _fill(template: str, **fields: str) -> str:
    # single pass so substituted text is never re-scanned for placeholders
    out = []
    i = 0
    while i < len(template):
        if template[i] == "{":
            j = template.find("}", i)
            key = template[i + 1 : j] if j != -1 else ""
            if key in fields:
                out.append(fields[key])
                i = j + 1
                continue
        out.append(template[i])
        i += 1
    return "".join(out)


def format_intervals(gt: IntervalSet, axis_mode: str = "index", series: TimeSeries | None = None) -> str:
    parts = []
    for iv in gt:
        if axis_mode == "timestamp" and series is not None and series.timestamps is not None:
            parts.append(format_interval(iv, series, "timestamp"))
        else:
            parts.append(f"({iv.start}, {iv.end})")
    return ", ".join(parts)


def build_elicitation_prompt(context: str, gt: IntervalSet, axis_mode: str = "index",
                             series: TimeSeries | None = None, image: bytes | None = None) -> PromptText:
    if not gt:
        raise ValueError("elicitation needs at least one ground-truth interval")
    text = _fill(ELICITATION_TEMPLATE, ts_context=context,
                 gt_anomaly_intervals=format_intervals(gt, axis_mode, series))
    return PromptText(user=text, image=image)


def build_detection_prompt(context: str, image: bytes | None = None) -> PromptText:
    return PromptText(user=_fill(DETECTION_TEMPLATE, ts_context=context), image=image)


def build_judge_prompt(context: str, decision_line: str, reasoning: str, image: bytes | None = None) -> PromptText:
    return PromptText(user=_fill(JUDGE_TEMPLATE, context=context, decision=decision_line, reasoning=reasoning),
                      image=image)


def build_pairwise_prompt(context: str, explanation_a: str, explanation_b: str,
                          image: bytes | None = None) -> PromptText:
    if not explanation_a or not explanation_b:
        raise ValueError("both explanations must be non-empty")
    return PromptText(user=_fill(PAIRWISE_TEMPLATE, context=context, explanation_a=explanation_a,
                                 explanation_b=explanation_b), image=image)
