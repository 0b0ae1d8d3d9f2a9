from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsanom.core import AnomalyInterval, IntervalSet, TimeSeries
from tsanom.errors import JudgeFormatError, SchemaError, ScoreRangeError, VerdictFormatError
from tsanom.schema import (
    CandidateOutput,
    ReasoningTrace,
    Verdict,
    candidate_from_record,
    candidate_to_record,
    map_timestamps_to_indices,
    parse_judge_scores,
    parse_pairwise_verdict,
    parse_structured_output,
    serialize_structured_output,
    split_steps,
)

T0 = datetime(2017, 1, 9, 5, 0, 0)
STAMPED = TimeSeries(values=tuple(range(100)), timestamps=tuple(T0 + timedelta(minutes=i) for i in range(100)))


def test_timestamp_example_snaps_to_indices():
    c = parse_structured_output(
        "<anomaly>True</anomaly><index>(2017-01-09 05:41:00, 2017-01-09 05:44:00)</index>", STAMPED)
    assert c.decision and list(c.intervals) == [AnomalyInterval(42, 45)]


def test_false_and_out_of_order():
    c = parse_structured_output("<anomaly>False</anomaly>")
    assert not c.decision and not c.intervals
    c = parse_structured_output("<anomaly>True</anomaly><index>(40,50)</index><index>(10,20)</index>")
    assert c.intervals.to_pairs() == [[10, 20], [40, 50]]
    assert any("out of order" in w for w in c.warnings)


def test_recoverable_problems_warn():
    c = parse_structured_output("<anomaly>True</anomaly><index>(20,10)</index>")
    assert c.intervals.to_pairs() == [[10, 20]] and any("swapped" in w for w in c.warnings)
    c = parse_structured_output("<anomaly>True</anomaly><index>(1,5)</index><index>(4,9)</index>")
    assert c.intervals.to_pairs() == [[1, 9]] and any("merged" in w for w in c.warnings)
    c = parse_structured_output("<anomaly>True</anomaly><index>(1,500)</index>", TimeSeries(values=(0.0,) * 100))
    assert c.intervals.to_pairs() == [[1, 100]] and any("clamped" in w for w in c.warnings)


@pytest.mark.parametrize("text, match", [
    ("<index>(1,2)</index>", "missing"),
    ("<anomaly>False</anomaly><index>(1,2)</index>", "False"),
    ("<anomaly>True</anomaly><index>(abc,2)</index>", "abc"),
    ("<anomaly>True</anomaly>", "without"),
    ("<anomaly>maybe</anomaly>", "True or False"),
])
def test_hard_errors(text, match):
    with pytest.raises(SchemaError, match=match):
        parse_structured_output(text)


def test_index_tags_inside_think_are_ignored():
    c = parse_structured_output("<anomaly>True</anomaly><index>(3,4)</index>\n"
                                "<think>Step 1: unlike <index>(9,9)</index> this is prose.</think>")
    assert c.intervals.to_pairs() == [[3, 4]]


def test_map_tokens():
    plain = TimeSeries(values=(0.0,) * 200)
    assert map_timestamps_to_indices(("100", "150"), plain) == (100, 150)
    assert map_timestamps_to_indices(("2017-01-09 05:04:00", "2017-01-09 05:04:00"), STAMPED) == (5, 5)
    # stamp k is 05:00 + (k - 1) min; 05:09:40 is nearer stamp 11, 05:09:30 is a tie and goes to 10
    assert map_timestamps_to_indices(("2017-01-09 05:09:40", "2017-01-09 05:09:40"), STAMPED) == (11, 11)
    assert map_timestamps_to_indices(("2017-01-09 05:09:30", "2017-01-09 05:09:30"), STAMPED) == (10, 10)
    assert map_timestamps_to_indices(("7.6", "8.4"), plain) == (8, 8)
    with pytest.raises(SchemaError):
        map_timestamps_to_indices(("noon", "5"), plain)
    with pytest.raises(SchemaError):
        map_timestamps_to_indices(("2017-01-09", "5"), plain)


def test_split_steps():
    assert split_steps("Step 1: a. Step 2: b.") == ("a.", "b.")
    assert split_steps("no markers") == ()


candidates = st.one_of(
    st.just(CandidateOutput(False, reasoning=ReasoningTrace(("nothing here",)))),
    st.lists(st.tuples(st.integers(1, 900), st.integers(0, 50)), min_size=1, max_size=5).map(
        lambda xs: CandidateOutput(
            True, IntervalSet.of((s, s + d) for s, d in xs),
            reasoning=ReasoningTrace(tuple(f"observation {k}" for k in range(len(xs))))),
    ),
)


@settings(max_examples=1000)
@given(candidates)
def test_round_trip_fixpoint(c):
    text = serialize_structured_output(c)
    back = parse_structured_output(text)
    assert back.decision == c.decision
    assert back.intervals == c.intervals
    assert len(back.reasoning.steps) == len(c.reasoning.steps)
    assert serialize_structured_output(back) == text


def test_serialize_examples():
    assert serialize_structured_output(CandidateOutput(True, IntervalSet.of([(10, 20)]))).splitlines()[0] == \
        "<anomaly>True</anomaly><index>(10,20)</index>"
    lines = serialize_structured_output(CandidateOutput(False, reasoning=ReasoningTrace(raw="flat"))).splitlines()
    assert lines == ["<anomaly>False</anomaly>", "<think>flat</think>"]
    with pytest.raises(SchemaError):
        CandidateOutput(False, IntervalSet.of([(1, 2)]))


def test_judge_scores():
    s = parse_judge_scores("VISUAL: 0.8\nAXIS: 0.9\nCLARITY: 0.7")
    assert (s.visual, s.axis, s.clarity) == (0.8, 0.9, 0.7)
    s = parse_judge_scores("VISUAL: 1\nAXIS: 0\nCLARITY: 0.5")
    assert (s.visual, s.axis, s.clarity) == (1.0, 0.0, 0.5)
    with pytest.raises(ScoreRangeError):
        parse_judge_scores("VISUAL: 1.2\nAXIS: 0\nCLARITY: 0")
    with pytest.raises(JudgeFormatError):
        parse_judge_scores("VISUAL: 1\nAXIS: 0")


def test_pairwise_verdicts():
    assert parse_pairwise_verdict("B") == Verdict.B
    assert parse_pairwise_verdict("The better explanation is A") == Verdict.A
    assert parse_pairwise_verdict("tie") == Verdict.TIE
    for bad in ("A or B", "", "none of them"):
        with pytest.raises(VerdictFormatError):
            parse_pairwise_verdict(bad)


def test_candidate_record_round_trip():
    c = parse_structured_output("<anomaly>True</anomaly><index>(3,4)</index>\n<think>Step 1: x</think>",
                                generator_id="g1")
    rec = candidate_to_record("seg", c, "raw", "g1")
    assert rec["status"] == "ok"
    back = candidate_from_record(rec)
    assert back.intervals == c.intervals and back.reasoning.steps == ("x",)
    bad = candidate_to_record("seg", None, "junk", "g1", error="missing <anomaly> tag")
    assert bad["status"] == "parse_error" and candidate_from_record(bad) is None
