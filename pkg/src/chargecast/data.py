"""Time grid, occupancy records, station series, and forecasting windows.

Everything in the package lives on a fixed 15-minute grid: a *slot* is a
900-second interval, indexed by the number of whole slots since the Unix
epoch.  A day has 96 slots and a week 672.  Occupancy is a 0/1 value per
(station, slot).

The CSV interchange format has the exact header ``station_id,timestamp,
occupied`` where ``timestamp`` is epoch seconds on the grid.  Parsing is
strict: off-grid timestamps, malformed rows, and non-binary occupancy all
raise :class:`DataError` with the offending line number.  Duplicate
(station, timestamp) pairs keep the last value and are counted so callers
can warn about them.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DataError, ShapeError

SLOT_SECONDS = 900
SLOTS_PER_DAY = 96
SLOTS_PER_WEEK = 672

# 1970-01-01 was a Thursday; weekday numbering is Monday=0.
_EPOCH_WEEKDAY = 3

CSV_HEADER = ["station_id", "timestamp", "occupied"]


@dataclass(frozen=True, order=True)
class TimeSlot:
    """One 900-second interval, counted in whole slots since the epoch."""

    epoch_slot: int

    @classmethod
    def from_epoch_seconds(cls, seconds: int) -> "TimeSlot":
        if seconds % SLOT_SECONDS != 0:
            raise DataError(f"timestamp {seconds} is not on the {SLOT_SECONDS}-second grid")
        return cls(seconds // SLOT_SECONDS)

    @property
    def epoch_seconds(self) -> int:
        return self.epoch_slot * SLOT_SECONDS

    @property
    def slot_of_day(self) -> int:
        return self.epoch_slot % SLOTS_PER_DAY

    @property
    def weekday(self) -> int:
        """Day of week, Monday=0 .. Sunday=6."""
        return (self.epoch_slot // SLOTS_PER_DAY + _EPOCH_WEEKDAY) % 7

    @property
    def hour(self) -> int:
        return self.slot_of_day // 4

    @property
    def quarter(self) -> int:
        """Quarter hour within the hour, 0..3."""
        return self.slot_of_day % 4

    def plus_slots(self, k: int) -> "TimeSlot":
        return TimeSlot(self.epoch_slot + k)


def slot_of_day_of(epoch_slots: np.ndarray) -> np.ndarray:
    """Vectorized TimeSlot.slot_of_day over an int array of epoch slots."""
    return np.asarray(epoch_slots) % SLOTS_PER_DAY


def weekday_of(epoch_slots: np.ndarray) -> np.ndarray:
    """Vectorized TimeSlot.weekday over an int array of epoch slots."""
    return (np.asarray(epoch_slots) // SLOTS_PER_DAY + _EPOCH_WEEKDAY) % 7


@dataclass(frozen=True)
class ChargingRecord:
    """Occupancy of one station during one slot."""

    station_id: str
    slot: TimeSlot
    occupied: int

    def __post_init__(self) -> None:
        if self.occupied not in (0, 1):
            raise DataError(f"occupied must be 0 or 1, got {self.occupied!r}")


@dataclass(frozen=True)
class ParseResult:
    """Outcome of parsing a record CSV."""

    records: tuple[ChargingRecord, ...]
    duplicate_count: int


def _open_source(source: str | Path | TextIO) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        try:
            return open(source, "r", newline=""), True
        except OSError as exc:
            raise DataError(f"cannot read {source}: {exc}") from None
    return source, False


def parse_records(source: str | Path | TextIO) -> ParseResult:
    """Parse occupancy records from CSV.

    Args:
        source: path or text stream with the canonical header.

    Returns:
        ParseResult with records sorted by (station_id, slot) and the
        number of duplicate (station, timestamp) rows that were dropped
        (last occurrence wins).

    Raises:
        DataError: wrong header, malformed row, off-grid timestamp, or
            non-binary occupancy; messages carry the 1-based line number.
    """
    stream, owned = _open_source(source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty input: missing CSV header") from None
        if header != CSV_HEADER:
            raise DataError(f"bad CSV header {header!r}, expected {CSV_HEADER!r}")
        seen: dict[tuple[str, int], int] = {}
        duplicates = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"line {line_no}: expected 3 fields, got {len(row)}")
            station_id = row[0]
            if not station_id:
                raise DataError(f"line {line_no}: empty station_id")
            try:
                timestamp = int(row[1])
                occupied = int(row[2])
            except ValueError:
                raise DataError(f"line {line_no}: non-integer timestamp or occupancy {row!r}") from None
            if timestamp % SLOT_SECONDS != 0:
                raise DataError(
                    f"line {line_no}: timestamp {timestamp} is not on the {SLOT_SECONDS}-second grid"
                )
            if occupied not in (0, 1):
                raise DataError(f"line {line_no}: occupied must be 0 or 1, got {occupied}")
            key = (station_id, timestamp // SLOT_SECONDS)
            if key in seen:
                duplicates += 1
            seen[key] = occupied
        records = tuple(
            ChargingRecord(sid, TimeSlot(slot), occ)
            for (sid, slot), occ in sorted(seen.items())
        )
        return ParseResult(records=records, duplicate_count=duplicates)
    finally:
        if owned:
            stream.close()


def serialize_records(records: Iterable[ChargingRecord], dest: str | Path | TextIO) -> None:
    """Write records as canonical CSV: sorted by (station_id, slot), LF line endings."""
    ordered = sorted(records, key=lambda r: (r.station_id, r.slot.epoch_slot))
    if isinstance(dest, (str, Path)):
        stream: TextIO = open(dest, "w", newline="")
        owned = True
    else:
        stream, owned = dest, False
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in ordered:
            writer.writerow([rec.station_id, rec.slot.epoch_seconds, rec.occupied])
    finally:
        if owned:
            stream.close()


def records_to_csv_string(records: Iterable[ChargingRecord]) -> str:
    """Serialize records to an in-memory canonical CSV string."""
    buf = io.StringIO()
    serialize_records(records, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class StationSeries:
    """A gap-free run of consecutive slots for one station.

    ``occupancy[k]`` is the 0/1 occupancy at ``start.epoch_slot + k``.
    """

    station_id: str
    start: TimeSlot
    occupancy: np.ndarray

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupancy, dtype=np.uint8)
        if occ.ndim != 1 or occ.size == 0:
            raise ShapeError(f"occupancy must be a non-empty 1-D array, got shape {occ.shape}")
        object.__setattr__(self, "occupancy", occ)

    def __len__(self) -> int:
        return int(self.occupancy.size)

    @property
    def end(self) -> TimeSlot:
        """First slot after the series (exclusive)."""
        return TimeSlot(self.start.epoch_slot + len(self))

    def epoch_slots(self) -> np.ndarray:
        return self.start.epoch_slot + np.arange(len(self), dtype=np.int64)


def build_series(records: Sequence[ChargingRecord]) -> list[StationSeries]:
    """Group records into per-station series, splitting at grid gaps.

    The concatenation of the returned series reproduces the input record
    multiset exactly.  Duplicate (station, slot) records are rejected.
    """
    by_station: dict[str, list[ChargingRecord]] = {}
    for rec in records:
        by_station.setdefault(rec.station_id, []).append(rec)
    series: list[StationSeries] = []
    for station_id in sorted(by_station):
        recs = sorted(by_station[station_id], key=lambda r: r.slot.epoch_slot)
        run_start = 0
        for k in range(1, len(recs) + 1):
            if k < len(recs):
                gap = recs[k].slot.epoch_slot - recs[k - 1].slot.epoch_slot
                if gap == 0:
                    raise DataError(
                        f"duplicate slot {recs[k].slot.epoch_slot} for station {station_id!r}"
                    )
                if gap == 1:
                    continue
            run = recs[run_start:k]
            series.append(
                StationSeries(
                    station_id=station_id,
                    start=run[0].slot,
                    occupancy=np.array([r.occupied for r in run], dtype=np.uint8),
                )
            )
            run_start = k
    return series


@dataclass(frozen=True)
class DatasetSplit:
    """Train series plus a list of consecutive one-week test sets."""

    train: tuple[StationSeries, ...]
    test_weeks: tuple[tuple[StationSeries, ...], ...]
    train_end: TimeSlot


def _clip_series(series: StationSeries, lo: int, hi: int) -> StationSeries | None:
    start = series.start.epoch_slot
    end = start + len(series)
    clip_lo = max(start, lo)
    clip_hi = min(end, hi)
    if clip_hi <= clip_lo:
        return None
    return StationSeries(
        station_id=series.station_id,
        start=TimeSlot(clip_lo),
        occupancy=series.occupancy[clip_lo - start : clip_hi - start],
    )


def split_train_test(
    series: Sequence[StationSeries], train_end: TimeSlot, n_test_weeks: int
) -> DatasetSplit:
    """Partition series at ``train_end`` into train data and weekly test sets.

    Train is everything strictly before ``train_end``; test week k covers
    [train_end + k*672, train_end + (k+1)*672).  Series are clipped at the
    boundaries, so one input series can contribute to several parts.

    Raises:
        DataError: if no data falls before ``train_end`` or the data ends
            before the last requested test week; the message states the
            required and available spans.
    """
    if n_test_weeks < 1:
        raise DataError(f"n_test_weeks must be >= 1, got {n_test_weeks}")
    if not series:
        raise DataError("no series to split")
    boundary = train_end.epoch_slot
    required_end = boundary + n_test_weeks * SLOTS_PER_WEEK
    available_end = max(s.start.epoch_slot + len(s) for s in series)
    if available_end < required_end:
        raise DataError(
            f"insufficient data for split: need slots up to {required_end}, data ends at {available_end}"
        )
    train = tuple(
        clipped for s in series if (clipped := _clip_series(s, -(2**62), boundary)) is not None
    )
    if not train:
        raise DataError(f"no training data before slot {boundary}")
    test_weeks = []
    for k in range(n_test_weeks):
        lo = boundary + k * SLOTS_PER_WEEK
        hi = lo + SLOTS_PER_WEEK
        week = tuple(
            clipped for s in series if (clipped := _clip_series(s, lo, hi)) is not None
        )
        test_weeks.append(week)
    return DatasetSplit(train=train, test_weeks=tuple(test_weeks), train_end=train_end)


@dataclass(frozen=True, eq=False)
class Window:
    """One forecasting example: an observed input run and the slots to predict.

    ``input_occ[t]`` is the occupancy at ``input_start + t`` for
    t in [0, input_slots); ``target_occ[j]`` is the occupancy at
    ``input_start + input_slots + j`` for j in [0, output_slots).
    """

    station_id: str
    input_start: TimeSlot
    input_occ: np.ndarray
    target_occ: np.ndarray

    @property
    def input_slots(self) -> int:
        return int(self.input_occ.size)

    @property
    def output_slots(self) -> int:
        return int(self.target_occ.size)

    @property
    def target_start(self) -> TimeSlot:
        return TimeSlot(self.input_start.epoch_slot + self.input_slots)

    @property
    def last_observed(self) -> int:
        """Occupancy of the final input slot, the decoder's bootstrap value."""
        return int(self.input_occ[-1])

    def input_epoch_slots(self) -> np.ndarray:
        return self.input_start.epoch_slot + np.arange(self.input_slots, dtype=np.int64)

    def target_epoch_slots(self) -> np.ndarray:
        return self.target_start.epoch_slot + np.arange(self.output_slots, dtype=np.int64)


def make_windows(
    series: Sequence[StationSeries],
    input_slots: int,
    output_slots: int,
    stride: int = 1,
) -> list[Window]:
    """Slide a (input_slots + output_slots) window over each series.

    Offsets are 0, stride, 2*stride, ... while the whole window fits, so a
    series of length L yields floor((L - input_slots - output_slots) /
    stride) + 1 windows when L >= input_slots + output_slots and none
    otherwise.  Input and target arrays are views into the series.
    """
    if input_slots < 1 or output_slots < 1:
        raise ShapeError(
            f"horizons must be >= 1 slot, got input={input_slots}, output={output_slots}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    total = input_slots + output_slots
    windows: list[Window] = []
    for s in series:
        if len(s) < total:
            continue
        for offset in range(0, len(s) - total + 1, stride):
            windows.append(
                Window(
                    station_id=s.station_id,
                    input_start=TimeSlot(s.start.epoch_slot + offset),
                    input_occ=s.occupancy[offset : offset + input_slots],
                    target_occ=s.occupancy[offset + input_slots : offset + total],
                )
            )
    return windows
