"""Time grid, CSV ingestion, series assembly, splitting, and windowing."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chargecast.data import (
    SLOT_SECONDS,
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    ChargingRecord,
    StationSeries,
    TimeSlot,
    build_series,
    make_windows,
    parse_records,
    records_to_csv_string,
    serialize_records,
    slot_of_day_of,
    split_train_test,
    weekday_of,
)
from chargecast.errors import DataError, ShapeError


def _records_from_bits(station_id: str, start_slot: int, bits) -> list[ChargingRecord]:
    return [
        ChargingRecord(station_id=station_id, slot=TimeSlot(start_slot + k), occupied=int(b))
        for k, b in enumerate(bits)
    ]


class TestTimeSlot:
    def test_grid_constants(self):
        assert SLOT_SECONDS == 900
        assert SLOTS_PER_DAY == 96
        assert SLOTS_PER_WEEK == 672

    def test_epoch_day_is_thursday(self):
        # 1970-01-01 was a Thursday; Monday=0 convention puts it at 3
        assert TimeSlot(0).weekday == 3

    def test_known_timestamp(self):
        # 2020-08-03 00:00:00 UTC, a Monday
        slot = TimeSlot.from_epoch_seconds(1596412800)
        assert slot.epoch_slot == 1773792
        assert slot.weekday == 0
        assert slot.slot_of_day == 0

    def test_hour_and_quarter(self):
        slot = TimeSlot(13 * 4 + 2)  # 13:30 on the epoch day
        assert slot.hour == 13
        assert slot.quarter == 2

    def test_off_grid_timestamp_rejected(self):
        with pytest.raises(DataError):
            TimeSlot.from_epoch_seconds(901)

    def test_round_trip_seconds(self):
        assert TimeSlot.from_epoch_seconds(1800).epoch_seconds == 1800

    def test_plus_slots_and_ordering(self):
        a = TimeSlot(10)
        assert a.plus_slots(5) == TimeSlot(15)
        assert a < TimeSlot(11)

    @given(st.integers(0, 10**7))
    @settings(max_examples=50, deadline=None)
    def test_vectorized_helpers_match_scalar(self, epoch_slot):
        slot = TimeSlot(epoch_slot)
        arr = np.array([epoch_slot])
        assert slot_of_day_of(arr)[0] == slot.slot_of_day
        assert weekday_of(arr)[0] == slot.weekday

    @given(st.integers(0, 10**7))
    @settings(max_examples=50, deadline=None)
    def test_week_periodicity(self, epoch_slot):
        later = TimeSlot(epoch_slot + SLOTS_PER_WEEK)
        now = TimeSlot(epoch_slot)
        assert later.weekday == now.weekday
        assert later.slot_of_day == now.slot_of_day


class TestParseRecords:
    def test_basic_parse(self):
        text = "station_id,timestamp,occupied\nA,900,1\nA,1800,0\n"
        result = parse_records(io.StringIO(text))
        assert result.duplicate_count == 0
        assert [(r.station_id, r.slot.epoch_slot, r.occupied) for r in result.records] == [
            ("A", 1, 1),
            ("A", 2, 0),
        ]

    def test_records_sorted_canonically(self):
        text = "station_id,timestamp,occupied\nB,900,1\nA,1800,0\nA,900,1\n"
        result = parse_records(io.StringIO(text))
        keys = [(r.station_id, r.slot.epoch_slot) for r in result.records]
        assert keys == sorted(keys)

    def test_wrong_header(self):
        with pytest.raises(DataError, match="header"):
            parse_records(io.StringIO("station,ts,occ\nA,900,1\n"))

    def test_malformed_row_names_line(self):
        text = "station_id,timestamp,occupied\nA,900,1\nA,not_a_number,0\n"
        with pytest.raises(DataError, match="line 3"):
            parse_records(io.StringIO(text))

    def test_bad_occupancy_value(self):
        text = "station_id,timestamp,occupied\nA,900,2\n"
        with pytest.raises(DataError, match="line 2"):
            parse_records(io.StringIO(text))

    def test_off_grid_timestamp_names_line(self):
        text = "station_id,timestamp,occupied\nA,901,1\n"
        with pytest.raises(DataError, match="line 2"):
            parse_records(io.StringIO(text))

    def test_duplicates_last_wins(self):
        text = "station_id,timestamp,occupied\nA,900,0\nA,900,1\n"
        result = parse_records(io.StringIO(text))
        assert result.duplicate_count == 1
        assert len(result.records) == 1
        assert result.records[0].occupied == 1

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError):
            parse_records(tmp_path / "missing.csv")

    def test_serialize_parse_round_trip(self, tmp_path):
        records = _records_from_bits("S01", 1000, [1, 0, 1]) + _records_from_bits(
            "S00", 2000, [0, 1]
        )
        path = tmp_path / "data.csv"
        serialize_records(records, path)
        back = parse_records(path)
        assert back.duplicate_count == 0
        assert sorted(
            (r.station_id, r.slot.epoch_slot, r.occupied) for r in records
        ) == [(r.station_id, r.slot.epoch_slot, r.occupied) for r in back.records]

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["A", "B", "C"]),
                st.integers(0, 500),
                st.integers(0, 1),
            ),
            max_size=40,
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_round_trip_property(self, triples):
        # dedupe on (station, slot): serialization assumes unique keys
        seen = {}
        for sid, slot, occ in triples:
            seen[(sid, slot)] = occ
        records = [
            ChargingRecord(station_id=sid, slot=TimeSlot(slot), occupied=occ)
            for (sid, slot), occ in seen.items()
        ]
        back = parse_records(io.StringIO(records_to_csv_string(records)))
        assert {(r.station_id, r.slot.epoch_slot): r.occupied for r in back.records} == seen


class TestBuildSeries:
    def test_single_run(self):
        series = build_series(_records_from_bits("A", 50, [1, 0, 1, 1]))
        assert len(series) == 1
        s = series[0]
        assert s.start == TimeSlot(50)
        assert s.end == TimeSlot(54)
        assert s.occupancy.tolist() == [1, 0, 1, 1]

    def test_gap_splits(self):
        records = _records_from_bits("A", 0, [1, 1]) + _records_from_bits("A", 5, [0, 0, 1])
        series = build_series(records)
        assert [(s.start.epoch_slot, len(s)) for s in series] == [(0, 2), (5, 3)]

    def test_duplicate_slot_rejected(self):
        records = _records_from_bits("A", 0, [1]) * 2
        with pytest.raises(DataError, match="duplicate"):
            build_series(records)

    def test_stations_kept_separate(self):
        records = _records_from_bits("A", 0, [1, 0]) + _records_from_bits("B", 2, [1])
        series = build_series(records)
        assert [(s.station_id, s.start.epoch_slot) for s in series] == [("A", 0), ("B", 2)]

    @given(
        st.dictionaries(
            st.sampled_from(["A", "B"]),
            st.sets(st.integers(0, 80), max_size=40),
            max_size=2,
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_multiset_preserved(self, slots_by_station):
        records = []
        rng = np.random.default_rng(0)
        for sid, slots in slots_by_station.items():
            for slot in slots:
                records.append(
                    ChargingRecord(
                        station_id=sid, slot=TimeSlot(slot), occupied=int(rng.integers(0, 2))
                    )
                )
        series = build_series(records)
        rebuilt = {
            (s.station_id, int(slot), int(occ))
            for s in series
            for slot, occ in zip(s.epoch_slots(), s.occupancy)
        }
        assert rebuilt == {(r.station_id, r.slot.epoch_slot, r.occupied) for r in records}
        # each series is gap-free by construction
        for s in series:
            diffs = np.diff(s.epoch_slots())
            assert np.all(diffs == 1)


class TestSplitTrainTest:
    def test_boundaries(self):
        occ = np.zeros(3 * SLOTS_PER_WEEK, dtype=np.uint8)
        series = [StationSeries("A", TimeSlot(0), occ)]
        split = split_train_test(series, TimeSlot(SLOTS_PER_WEEK), 2)
        assert len(split.train) == 1
        assert len(split.train[0]) == SLOTS_PER_WEEK
        assert split.train[0].end == TimeSlot(SLOTS_PER_WEEK)
        assert len(split.test_weeks) == 2
        for k, week in enumerate(split.test_weeks):
            assert len(week) == 1
            assert week[0].start.epoch_slot == SLOTS_PER_WEEK * (k + 1)
            assert len(week[0]) == SLOTS_PER_WEEK

    def test_insufficient_data_message_states_spans(self):
        series = [StationSeries("A", TimeSlot(0), np.zeros(700, dtype=np.uint8))]
        with pytest.raises(DataError, match="need slots up to 1344.*ends at 700"):
            split_train_test(series, TimeSlot(0), 2)

    def test_no_train_data_rejected(self):
        series = [
            StationSeries("A", TimeSlot(0), np.zeros(2 * SLOTS_PER_WEEK, dtype=np.uint8))
        ]
        with pytest.raises(DataError, match="no training data"):
            split_train_test(series, TimeSlot(0), 2)

    def test_short_series_dropped_from_weeks_they_miss(self):
        # station B exists only in the second test week's range
        series = [
            StationSeries("A", TimeSlot(0), np.zeros(3 * SLOTS_PER_WEEK, dtype=np.uint8)),
            StationSeries(
                "B",
                TimeSlot(2 * SLOTS_PER_WEEK),
                np.ones(SLOTS_PER_WEEK, dtype=np.uint8),
            ),
        ]
        split = split_train_test(series, TimeSlot(SLOTS_PER_WEEK), 2)
        assert [s.station_id for s in split.test_weeks[0]] == ["A"]
        assert sorted(s.station_id for s in split.test_weeks[1]) == ["A", "B"]

    def test_train_test_cover_disjoint_slots(self):
        occ = np.arange(3 * SLOTS_PER_WEEK) % 2
        series = [StationSeries("A", TimeSlot(10), occ.astype(np.uint8))]
        split = split_train_test(series, TimeSlot(SLOTS_PER_WEEK + 10), 2)
        train_slots = set(split.train[0].epoch_slots().tolist())
        test_slots = [
            set(w.epoch_slots().tolist()) for week in split.test_weeks for w in week
        ]
        all_test = set().union(*test_slots)
        assert not train_slots & all_test
        assert train_slots | all_test == set(range(10, 10 + 3 * SLOTS_PER_WEEK))


class TestMakeWindows:
    def test_count_formula(self):
        series = [StationSeries("A", TimeSlot(0), np.zeros(100, dtype=np.uint8))]
        for i, o, stride in [(10, 5, 1), (10, 5, 7), (30, 20, 13), (96, 4, 1)]:
            expected = (100 - i - o) // stride + 1
            assert len(make_windows(series, i, o, stride)) == expected

    def test_too_short_series_yields_nothing(self):
        series = [StationSeries("A", TimeSlot(0), np.zeros(9, dtype=np.uint8))]
        assert make_windows(series, 6, 4) == []

    def test_window_contents(self):
        occ = np.array([0, 1, 1, 0, 1, 0, 0, 1], dtype=np.uint8)
        series = [StationSeries("A", TimeSlot(100), occ)]
        windows = make_windows(series, 3, 2, stride=2)
        assert len(windows) == 2
        w0, w1 = windows
        assert w0.input_start == TimeSlot(100)
        assert w0.input_occ.tolist() == [0, 1, 1]
        assert w0.target_occ.tolist() == [0, 1]
        assert w0.last_observed == 1
        assert w1.input_start == TimeSlot(102)
        assert w1.input_occ.tolist() == [1, 0, 1]
        assert w1.target_occ.tolist() == [0, 0]
        assert w0.target_start == TimeSlot(103)
        assert w0.target_epoch_slots().tolist() == [103, 104]

    def test_rejects_bad_horizons(self):
        series = [StationSeries("A", TimeSlot(0), np.zeros(10, dtype=np.uint8))]
        with pytest.raises(ShapeError):
            make_windows(series, 0, 1)
        with pytest.raises(ShapeError):
            make_windows(series, 1, 1, stride=0)

    @given(st.integers(20, 120), st.integers(1, 10), st.integers(1, 10), st.integers(1, 9))
    @settings(max_examples=40, deadline=None)
    def test_count_property(self, length, i, o, stride):
        series = [StationSeries("A", TimeSlot(0), np.zeros(length, dtype=np.uint8))]
        windows = make_windows(series, i, o, stride)
        if length < i + o:
            assert windows == []
        else:
            assert len(windows) == (length - i - o) // stride + 1
            # every window stays inside the series
            last = windows[-1]
            assert last.input_start.epoch_slot + i + o <= length
