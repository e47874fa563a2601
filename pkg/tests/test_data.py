import json

import numpy as np
import pytest

from sorn.data import (DistributionSeries, IntervalScheme, SCHEMES, TaskEvent, bin_events, get_scheme, normalize,
                       read_events_csv, read_labels, read_series, split, write_labels, write_series)


def _series(counts, slot=5.0, scheme=None):
    counts = np.asarray(counts)
    scheme = scheme or IntervalScheme(tuple(range(0, 10 * counts.shape[1], 10)), overflow=True)
    return DistributionSeries(slot * np.arange(len(counts)), counts, scheme, slot)


def test_sync_scheme_has_dimension_14_with_overflow():
    assert get_scheme("sync").dim == 14
    assert get_scheme("Sync") is SCHEMES["sync"]


def test_midpoints_and_overflow_representative():
    s = IntervalScheme((0, 10, 20, 30))
    np.testing.assert_array_equal(s.midpoints, [5, 15, 25, 35])
    assert IntervalScheme((0, 10, 20, 30), overflow=False).dim == 3


def test_scheme_rejects_non_increasing_edges():
    with pytest.raises(ValueError):
        IntervalScheme((0, 10, 10, 20))
    with pytest.raises(ValueError):
        get_scheme("nope")


def test_single_event_lands_in_its_interval():
    series, report = bin_events([TaskEvent("a", 2.0, 15.0)], get_scheme("sync"), 5.0, (0.0, 10.0))
    assert series.counts[0, 1] == 1 and series.counts.sum() == 1
    assert report.binned == 1


def test_left_closed_boundary():
    series, _ = bin_events([TaskEvent("a", 0.0, 10.0)], IntervalScheme((0, 10, 20)), 5.0, (0.0, 5.0))
    assert series.counts[0].tolist() == [0, 1, 0]


def test_overflow_bin_catches_long_durations():
    series, _ = bin_events([TaskEvent("a", 0.0, 10_000.0)], get_scheme("mustang"), 5.0, (0.0, 5.0))
    assert series.counts[0, -1] == 1


def test_empty_event_list_gives_zero_counts():
    series, report = bin_events([], get_scheme("sync"), 5.0, (0.0, 20.0))
    assert series.counts.shape == (4, 14) and not series.counts.any()
    assert report.total == 0


def test_out_of_span_events_are_dropped_and_counted():
    evs = [TaskEvent("a", -1.0, 5.0), TaskEvent("b", 3.0, 5.0), TaskEvent("c", 10.0, 5.0)]
    series, report = bin_events(evs, get_scheme("sync"), 5.0, (0.0, 10.0))
    assert series.counts.sum() == 1 and report.out_of_span == 2


def test_binning_conserves_mass():
    rng = np.random.default_rng(0)
    evs = [TaskEvent(str(i), float(t), float(d))
           for i, (t, d) in enumerate(zip(rng.uniform(0, 100, 500), rng.exponential(80, 500)))]
    series, report = bin_events(evs, get_scheme("sync"), 5.0, (0.0, 100.0))
    assert series.counts.sum() == report.binned == 500


def test_negative_duration_rejected():
    with pytest.raises(ValueError, match="negative"):
        TaskEvent("a", 0.0, -1.0)


def test_bin_events_preconditions():
    with pytest.raises(ValueError):
        bin_events([], get_scheme("sync"), 0.0, (0.0, 1.0))
    with pytest.raises(ValueError):
        bin_events([], get_scheme("sync"), 1.0, (1.0, 1.0))


def test_normalize_ratio_uniform_fill_and_idempotence():
    s = normalize(_series([[2, 2, 0, 0], [0, 0, 0, 0]]))
    np.testing.assert_array_equal(s.proportions[0], [0.5, 0.5, 0, 0])
    np.testing.assert_array_equal(s.proportions[1], [0.25] * 4)
    assert s.missing.tolist() == [False, True]
    again = normalize(s)
    np.testing.assert_array_equal(again.proportions, s.proportions)
    np.testing.assert_array_equal(again.missing, s.missing)


def test_expectation_lies_between_extreme_midpoints():
    rng = np.random.default_rng(1)
    s = normalize(_series(rng.integers(0, 9, (40, 5))))
    e = s.expectation()
    m = s.scheme.midpoints
    assert (e >= m[0]).all() and (e <= m[-1]).all()


def test_split_floor_and_labels():
    s = _series(np.ones((10, 3), dtype=int))
    (tr, ytr), (te, yte) = split(s, np.arange(10), 0.7)
    assert len(tr) == 7 and len(te) == 3
    assert ytr.tolist() == list(range(7)) and yte.tolist() == [7, 8, 9]
    (tr, _), (te, _) = split(_series(np.ones((3, 3), dtype=int)), [0, 0, 1], 0.7)
    assert (len(tr), len(te)) == (2, 1)


def test_split_errors():
    s = _series(np.ones((3, 3), dtype=int))
    with pytest.raises(ValueError):
        split(s, [0, 1], 0.5)
    with pytest.raises(ValueError):
        split(s, None, 0.1)
    with pytest.raises(ValueError):
        split(s, None, 1.0)


def test_series_rejects_irregular_timestamps():
    with pytest.raises(ValueError):
        DistributionSeries(np.array([0.0, 5.0, 11.0]), np.ones((3, 2), dtype=int), IntervalScheme((0, 10)), 5.0)


def test_series_round_trip_is_bit_identical(tmp_path):
    rng = np.random.default_rng(2)
    s = _series(rng.integers(0, 50, (30, 6)), slot=2.5)
    path = tmp_path / "s.csv"
    write_series(s, path)
    back = read_series(path)
    np.testing.assert_array_equal(back.counts, s.counts)
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    assert back.scheme == s.scheme
    meta = json.loads((tmp_path / "s.scheme.json").read_text())
    assert meta["slot_duration"] == 2.5 and meta["normalized"] is False


def test_normalized_round_trip_keeps_missing_flags(tmp_path):
    s = normalize(_series([[1, 3, 0], [0, 0, 0], [2, 2, 2]]))
    write_series(s, tmp_path / "p.csv", use_counts=False)
    back = read_series(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.proportions, s.proportions)
    assert back.missing.tolist() == [False, True, False]


def test_labels_round_trip(tmp_path):
    write_labels([0.0, 5.0, 10.0], [0, 1, 0], tmp_path / "l.csv")
    ts, y = read_labels(tmp_path / "l.csv")
    assert ts.tolist() == [0.0, 5.0, 10.0] and y.tolist() == [0, 1, 0]


def test_events_csv_reports_bad_rows_with_line_numbers(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("task_id,end_timestamp,duration_min\nt1,1.0,5\nt2,abc,5\nt3,2.0\nt4,3.0,-2\n")
    events, bad = read_events_csv(p)
    assert [e.task_id for e in events] == ["t1"]
    assert [ln for ln, _ in bad] == [3, 4, 5]


def test_events_csv_header_checked(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("id,time,dur\n")
    with pytest.raises(ValueError, match="header"):
        read_events_csv(p)
