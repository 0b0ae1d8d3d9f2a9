import json

import pytest

from tsanom.core import IntervalSet, Segment, TimeSeries
from tsanom.errors import IngestError, SynthSpecError
from tsanom.ingest import (
    ConsensusPolicy,
    InjectedAnomaly,
    SegmentationCriteria,
    SynthSpec,
    Waveform,
    check_segment_criteria,
    consensus_filter,
    load_dataset,
    load_series,
    load_series_with_context,
    read_jsonl,
    read_segment_store,
    segment_series,
    synth_series,
    synthetic_corpus,
    write_segment_store,
)
from tsanom.schema import CandidateOutput


def labeled(n, start, end):
    return TimeSeries(values=tuple(float(i % 7) for i in range(n)),
                      labels=tuple(start <= i <= end for i in range(1, n + 1)), id="s")


def test_csv_loading(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("value,label\n3.0,0\n9.9,1\n3.1,0\n")
    s = load_series(p)
    assert s.values == (3.0, 9.9, 3.1) and s.labels == (False, True, False) and s.id == "a"
    p.write_text("value\n1\n2\n")
    assert load_series(p).labels is None


@pytest.mark.parametrize("body, row", [
    ("value,label\nabc,0\n", 1),
    ("value,label\n1,0\n2,7\n", 2),
    ("timestamp,value\n2020-01-02,1\n2020-01-01,2\n", 2),
    ("timestamp,value\n2020-01-01,1\nyesterday,2\n", 2),
])
def test_csv_errors_name_the_row(tmp_path, body, row):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(IngestError) as info:
        load_series(p)
    assert info.value.row == row and f"row {row}" in str(info.value)


def test_manifest_loading(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"id": "m1", "values": [1, 2, 3], "labels": [0, 1, 0],
                             "timestamps": ["2020-01-01 00:00:00", "2020-01-01 00:01:00", "2020-01-01 00:02:00"],
                             "context": "pump pressure"}))
    s, ctx = load_series_with_context(p)
    assert s.id == "m1" and ctx == "pump pressure" and s.labels == (False, True, False)
    p.write_text(json.dumps({"values": [1, 2], "labels": [0]}))
    with pytest.raises(IngestError, match="labels length"):
        load_series(p)


def test_dataset_errors(tmp_path):
    with pytest.raises(IngestError, match=str(tmp_path)):
        load_dataset(tmp_path)
    with pytest.raises(IngestError):
        load_dataset(tmp_path / "missing")


def test_segmentation_examples():
    segs = segment_series(labeled(1000, 451, 501))
    assert len(segs) == 1
    seg = segs[0]
    assert not check_segment_criteria(seg.gt, len(seg.series), SegmentationCriteria())
    assert segment_series(labeled(150, 70, 75)) == []
    assert segment_series(labeled(1000, 1, 500)) == []
    assert segment_series(TimeSeries(values=(0.0,) * 300)) == []


def test_segment_criteria_reports_violations():
    probs = check_segment_criteria(IntervalSet.of([(1, 500)]), 1000, SegmentationCriteria())
    assert any("ratio" in p for p in probs)
    assert check_segment_criteria(IntervalSet(), 1000, SegmentationCriteria()) == ["no anomaly"]
    with pytest.raises(ValueError):
        SegmentationCriteria(target_ratio_range=(0.2, 0.1))


def _cand(decision, pairs=()):
    return CandidateOutput(decision, IntervalSet.of(pairs), generator_id="g")


def test_consensus_cases():
    seg = Segment(labeled(300, 140, 150), IntervalSet.of([(140, 150)]))
    hit, miss = _cand(True, [(141, 150)]), _cand(False)
    assert consensus_filter(seg, [miss, miss, miss, hit]).decision == "drop"
    assert consensus_filter(seg, [hit, hit, hit, miss]).decision == "keep"
    assert consensus_filter(seg, [hit, miss, hit, miss]).keep
    assert consensus_filter(seg, [None, None, hit]).decision == "drop"
    far = _cand(True, [(1, 5)])
    assert not consensus_filter(seg, [far, far, hit]).keep
    strict = ConsensusPolicy(f1_threshold=0.99)
    assert not consensus_filter(seg, [hit, hit, hit], strict).keep
    for perm in ([hit, miss, miss, hit], [miss, hit, hit, miss], [miss, miss, hit, hit]):
        assert consensus_filter(seg, perm).keep


def test_synth_examples():
    seg = synth_series(SynthSpec(1000, Waveform("constant", 0.0), anomaly=InjectedAnomaly("spike", 500, None, 10.0)))
    assert seg.gt.to_pairs() == [[500, 500]] and seg.series.values[499] == 10.0
    seg = synth_series(SynthSpec(1000, Waveform("sine"), anomaly=InjectedAnomaly("level_shift", 400, 500, 3.0)))
    assert seg.gt.to_pairs() == [[400, 500]]
    spec = SynthSpec(300, Waveform("random_walk"), noise_sigma=0.5, anomaly=InjectedAnomaly("spike", 10), seed=9)
    assert synth_series(spec).series.values == synth_series(spec).series.values
    with pytest.raises(SynthSpecError):
        synth_series(SynthSpec(100, anomaly=InjectedAnomaly("spike", 95, 101)))
    with pytest.raises(SynthSpecError):
        synth_series(SynthSpec(100, anomaly=InjectedAnomaly("frequency_change", 10, 20)))


def test_synthetic_corpus_segments():
    corpus = synthetic_corpus(8, seed=4)
    assert [s.id for s, _ in corpus] == [s.id for s, _ in synthetic_corpus(8, seed=4)]
    for series, ctx in corpus:
        assert ctx and len(segment_series(series, context=ctx)) >= 1


def test_store_round_trip(tmp_path):
    a = synth_series(SynthSpec(250, anomaly=InjectedAnomaly("spike", 120, 124), id="b"))
    stamps = TimeSeries(values=(1.0, 2.0, 3.0), timestamps=(10, 20, 30), labels=(False, True, False), id="a")
    b = Segment(stamps, IntervalSet.of([(2, 2)]), context="ctx")
    path = tmp_path / "store.jsonl"
    write_segment_store(path, [a, b], extra={"config_hash": "abc"})
    back = read_segment_store(path)
    assert [s.segment_id for s in back] == ["a", "b"]
    assert back[0].series.timestamps == (10, 20, 30) and back[0].context == "ctx"
    assert back[1].series.values == a.series.values and back[1].gt == a.gt
    assert read_jsonl(path)[0]["config_hash"] == "abc"
    path.write_text(path.read_text() + "{not json\n")
    with pytest.raises(IngestError, match="row 3"):
        read_jsonl(path)
