"""Offline responders for hermetic runs of the pipeline.

Use them from a config file as ``mock_responder: "tsanom.llm.demo:rank0"`` etc.
The generators read the ground-truth intervals that the elicitation prompt
carries and answer with a copy degraded by a planted amount, so the expected
reward ranking is known in advance:

* The best slot on a segment is ``sha256(gt text) % 4``.
* Generator ``rank<g>`` has degradation ``(g - best) % 4``.
* Degradation ``d`` trims ``d * step`` points off the end of each interval.
  Intervals shorter than 4 points are extended instead.

The judge responder gives every explanation the same scores, so the anomaly
accuracy term alone decides the winner.
"""

from __future__ import annotations

import hashlib
import re

from .prompts import PromptText

SLOTS = 4
_GT_LINE = re.compile(r"- The anomaly is:\n  - (.*)\n")
_PAIR = re.compile(r"\(([^,()]+),\s*([^,()]+)\)")


def planted_best(gt_text: str) -> int:
    return int(hashlib.sha256(gt_text.encode()).hexdigest(), 16) % SLOTS


def degrade(start: int, end: int, level: int) -> tuple[int, int]:
    if level == 0:
        return start, end
    length = end - start + 1
    if length >= 4:
        step = max(1, (length - 1) // SLOTS)
        return start, end - level * step
    return start, end + level


def _answer(gt_text: str, level: int) -> str:
    parts = []
    for a, b in _PAIR.findall(gt_text):
        a, b = a.strip(), b.strip()
        if a.lstrip("-").isdigit() and b.lstrip("-").isdigit():
            s, e = degrade(int(a), int(b), level)
            parts.append(f"<index>({s},{e})</index>")
        else:
            parts.append(f"<index>({a},{b})</index>")
    return (
        "<anomaly>True</anomaly>" + "".join(parts) + "\n"
        "<think>Step 1: The baseline is steady around its usual level. "
        "Step 2: A deviation is visible in the marked region. "
        "Step 3: Adjacent abnormal points are merged into inclusive intervals.</think>"
    )


def planted_generator(slot: int):
    def respond(prompt: PromptText) -> str:
        m = _GT_LINE.search(prompt.user)
        if m is None:
            return "<anomaly>False</anomaly>\n<think>Step 1: No labeled interval was provided.</think>"
        gt_text = m.group(1)
        return _answer(gt_text, (slot - planted_best(gt_text)) % SLOTS)

    respond.__name__ = f"rank{slot}"
    return respond


rank0 = planted_generator(0)
rank1 = planted_generator(1)
rank2 = planted_generator(2)
rank3 = planted_generator(3)


def constant_judge(prompt: PromptText) -> str:
    return "VISUAL: 0.8\nAXIS: 0.7\nCLARITY: 0.9"


def always_a(prompt: PromptText) -> str:
    return "A"


def longer_explanation(prompt: PromptText) -> str:
    """Pairwise judge that consistently prefers the longer explanation."""
    m = re.search(r"Explanation A:\n(.*?)\n\nExplanation B:\n(.*?)\n\nJudge", prompt.user, re.S)
    if m is None:
        return "TIE"
    a, b = len(m.group(1)), len(m.group(2))
    return "A" if a > b else "B" if b > a else "TIE"
