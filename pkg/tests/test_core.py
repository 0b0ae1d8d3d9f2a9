import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from tsanom.core import (
    AnomalyInterval,
    IntervalSet,
    Segment,
    TimeSeries,
    intersect,
    intervals_to_labels,
    labels_to_intervals,
    normalize,
    overlaps,
    point_count,
)
from tsanom.errors import BoundsError, MalformedIntervalError

raw_intervals = st.lists(
    st.tuples(st.integers(1, 60), st.integers(0, 8)).map(lambda t: (t[0], t[0] + t[1])), max_size=8
)


def pairs(s: IntervalSet) -> list[tuple[int, int]]:
    return [tuple(iv) for iv in s]


@pytest.mark.parametrize(
    "given_, expected",
    [
        ([(10, 20), (15, 25)], [(10, 25)]),
        ([(10, 20), (21, 30)], [(10, 30)]),
        ([(40, 50), (10, 20)], [(10, 20), (40, 50)]),
        ([], []),
        ([(3, 3)], [(3, 3)]),
    ],
)
def test_normalize_examples(given_, expected):
    assert pairs(normalize(given_)) == expected


def test_normalize_rejects_reversed():
    with pytest.raises(MalformedIntervalError):
        normalize([(5, 4)])


@given(raw_intervals)
def test_normalize_matches_point_set_oracle(raw):
    out = normalize(raw)
    assert pairs(out) == oracles.pairs_from_points(oracles.points(raw))
    assert normalize(out) == out


@given(raw_intervals, raw_intervals)
def test_intersect_matches_point_sets(a, b):
    got = intersect(normalize(a), normalize(b))
    assert got.points() == oracles.points(a) & oracles.points(b)
    assert intersect(normalize(a), normalize(a)) == normalize(a)


@given(st.lists(st.booleans(), min_size=1, max_size=40))
def test_labels_round_trip(labels):
    s = labels_to_intervals(labels)
    assert intervals_to_labels(s, len(labels)) == labels
    assert point_count(s) == sum(labels)


def test_label_examples():
    F, T = False, True
    assert pairs(labels_to_intervals([F, T, T, F, T])) == [(2, 3), (5, 5)]
    assert pairs(labels_to_intervals([F] * 4)) == []
    assert pairs(labels_to_intervals([T] * 7)) == [(1, 7)]
    assert intervals_to_labels(IntervalSet.of([(2, 3)]), 4) == [F, T, T, F]
    assert intervals_to_labels(IntervalSet(), 3) == [F, F, F]
    with pytest.raises(BoundsError):
        intervals_to_labels(IntervalSet.of([(3, 5)]), 4)


def test_point_count_and_intersect_examples():
    assert point_count(IntervalSet.of([(10, 19)])) == 10
    assert point_count(IntervalSet()) == 0
    assert point_count(IntervalSet.of([(1, 3), (7, 7)])) == 4
    assert pairs(intersect(IntervalSet.of([(10, 19)]), IntervalSet.of([(15, 29)]))) == [(15, 19)]
    assert not intersect(IntervalSet.of([(1, 2)]), IntervalSet.of([(5, 6)]))


def test_overlaps_inclusive():
    assert overlaps(AnomalyInterval(10, 20), AnomalyInterval(20, 30))
    assert not overlaps(AnomalyInterval(10, 20), AnomalyInterval(21, 30))
    assert overlaps(AnomalyInterval(5, 50), AnomalyInterval(10, 20))


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries(values=())
    with pytest.raises(ValueError, match="strictly increasing"):
        TimeSeries(values=(1, 2, 3), timestamps=(1, 3, 3))
    with pytest.raises(ValueError):
        TimeSeries(values=(1, 2), labels=(True,))


def test_segment_bounds_and_default_id():
    ts = TimeSeries(values=(0.0,) * 5, id="abc")
    assert Segment(ts, IntervalSet.of([(1, 5)])).segment_id == "abc"
    with pytest.raises(BoundsError):
        Segment(ts, IntervalSet.of([(4, 6)]))
