"""Feature construction: dynamic input encoding and static usage profiles.

Dynamic features describe one observed slot: the occupancy bit plus
one-hot calendar context (weekday, hour, quarter hour), 36 dimensions in
the full layout.  Static features describe long-run behaviour of a
station: per slot-of-day mean occupancy and nearest-rank 0.25/0.75
quantiles computed on training data only.

Profiles are keyed by slot of day (96 buckets) by default, pooling all
weekdays; a weekday-conditioned variant (672 buckets) is available.  A
pooled ``__GLOBAL__`` profile over all stations backs off lookups for
stations that were never seen in training.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .data import (
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    StationSeries,
    TimeSlot,
    Window,
    slot_of_day_of,
    weekday_of,
)
from .errors import DataError, ShapeError

GLOBAL_STATION = "__GLOBAL__"

STATIC_FEATURES = ("mean", "q25", "q75")

PROFILE_CSV_HEADER = ["station_id", "slot_of_day", "mean", "q25", "q75", "count"]


@dataclass(frozen=True)
class DynamicLayout:
    """Which blocks of the per-slot input vector are active.

    The full layout is [occupancy (1) | weekday one-hot (7) | hour
    one-hot (24) | quarter one-hot (4)] = 36 dimensions.  Feature-drop
    experiments zero out whole blocks by excluding them here;
    ``time_of_day`` covers the hour and quarter blocks together.
    """

    occupation: bool = True
    day_of_week: bool = True
    time_of_day: bool = True

    @property
    def dim(self) -> int:
        return (
            (1 if self.occupation else 0)
            + (7 if self.day_of_week else 0)
            + (28 if self.time_of_day else 0)
        )

    def offsets(self) -> dict[str, int]:
        """Start index of each active block."""
        out: dict[str, int] = {}
        pos = 0
        if self.occupation:
            out["occupation"] = pos
            pos += 1
        if self.day_of_week:
            out["weekday"] = pos
            pos += 7
        if self.time_of_day:
            out["hour"] = pos
            pos += 24
            out["quarter"] = pos
            pos += 4
        return out


FULL_LAYOUT = DynamicLayout()


def encode_dynamic(occupied: int, slot: TimeSlot, layout: DynamicLayout = FULL_LAYOUT) -> np.ndarray:
    """Encode one observed slot as a float vector.

    Args:
        occupied: 0/1 occupancy of the slot.
        slot: grid position supplying the calendar context.
        layout: active feature blocks; the default is the full 36-dim
            layout.

    Returns:
        Vector of shape (layout.dim,) with the occupancy bit and one-hot
        weekday/hour/quarter blocks.
    """
    if occupied not in (0, 1):
        raise DataError(f"occupied must be 0 or 1, got {occupied!r}")
    vec = np.zeros(layout.dim, dtype=np.float64)
    offs = layout.offsets()
    if "occupation" in offs:
        vec[offs["occupation"]] = float(occupied)
    if "weekday" in offs:
        vec[offs["weekday"] + slot.weekday] = 1.0
    if "hour" in offs:
        vec[offs["hour"] + slot.hour] = 1.0
        vec[offs["quarter"] + slot.quarter] = 1.0
    return vec


def encode_window_inputs(windows: Sequence[Window], layout: DynamicLayout = FULL_LAYOUT) -> np.ndarray:
    """Encode the input slots of many windows at once.

    Returns an array of shape (n_windows, input_slots, layout.dim) equal,
    row for row, to calling :func:`encode_dynamic` per slot.
    """
    if not windows:
        return np.zeros((0, 0, layout.dim), dtype=np.float64)
    n_in = windows[0].input_slots
    for w in windows:
        if w.input_slots != n_in:
            raise ShapeError(
                f"mixed input lengths in batch: {w.input_slots} vs {n_in}"
            )
    batch = len(windows)
    occ = np.stack([w.input_occ for w in windows]).astype(np.float64)
    starts = np.array([w.input_start.epoch_slot for w in windows], dtype=np.int64)
    slots = starts[:, None] + np.arange(n_in, dtype=np.int64)[None, :]
    out = np.zeros((batch, n_in, layout.dim), dtype=np.float64)
    offs = layout.offsets()
    rows = np.repeat(np.arange(batch), n_in)
    cols = np.tile(np.arange(n_in), batch)
    if "occupation" in offs:
        out[:, :, offs["occupation"]] = occ
    if "weekday" in offs:
        out[rows, cols, offs["weekday"] + weekday_of(slots).ravel()] = 1.0
    if "hour" in offs:
        sod = slot_of_day_of(slots)
        out[rows, cols, offs["hour"] + (sod // 4).ravel()] = 1.0
        out[rows, cols, offs["quarter"] + (sod % 4).ravel()] = 1.0
    return out


def nearest_rank_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile of pre-sorted values.

    Uses the rank ceil(q * n) (1-based), so the result is always one of
    the input values.

    Args:
        sorted_values: non-empty 1-D array in ascending order.
        q: quantile in (0, 1].
    """
    values = np.asarray(sorted_values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise DataError(f"quantile needs a non-empty 1-D array, got shape {values.shape}")
    if not 0.0 < q <= 1.0:
        raise DataError(f"quantile level must be in (0, 1], got {q}")
    rank = math.ceil(q * values.size)
    return float(values[rank - 1])


@dataclass(frozen=True)
class StaticProfile:
    """Long-run occupancy statistics for one station.

    Arrays are indexed by bucket: slot of day (96) or, when
    ``weekday_conditioned``, weekday * 96 + slot of day (672).  Buckets
    with no training data hold the station's overall mean occupancy in
    all three statistics and a count of 0.
    """

    station_id: str
    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    count: np.ndarray
    weekday_conditioned: bool

    @property
    def n_buckets(self) -> int:
        return int(self.mean.size)

    def bucket_of(self, epoch_slots: np.ndarray) -> np.ndarray:
        sod = slot_of_day_of(epoch_slots)
        if self.weekday_conditioned:
            return weekday_of(epoch_slots) * SLOTS_PER_DAY + sod
        return sod


@dataclass(frozen=True)
class StaticRows:
    """Per-feature profile values aligned with a window's target slots."""

    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray

    def stacked(self) -> np.ndarray:
        """Rows stacked in STATIC_FEATURES order, shape (3, output_slots)."""
        return np.stack([self.mean, self.q25, self.q75])


@dataclass(frozen=True)
class ProfileSet:
    """All station profiles plus the pooled global fallback."""

    stations: dict[str, StaticProfile]
    global_profile: StaticProfile
    weekday_conditioned: bool

    def lookup(self, station_id: str) -> StaticProfile:
        """Profile for a station, falling back to the pooled global one."""
        return self.stations.get(station_id, self.global_profile)

    def has(self, station_id: str) -> bool:
        return station_id in self.stations


def _profile_from_values(
    station_id: str,
    bucket_idx: np.ndarray,
    values: np.ndarray,
    n_buckets: int,
    weekday_conditioned: bool,
) -> StaticProfile:
    counts = np.bincount(bucket_idx, minlength=n_buckets).astype(np.int64)
    sums = np.bincount(bucket_idx, weights=values, minlength=n_buckets)
    overall_mean = float(values.mean())
    mean = np.full(n_buckets, overall_mean, dtype=np.float64)
    q25 = np.full(n_buckets, overall_mean, dtype=np.float64)
    q75 = np.full(n_buckets, overall_mean, dtype=np.float64)
    order = np.argsort(bucket_idx, kind="stable")
    sorted_buckets = bucket_idx[order]
    sorted_values = values[order]
    bounds = np.searchsorted(sorted_buckets, np.arange(n_buckets + 1))
    for b in range(n_buckets):
        lo, hi = bounds[b], bounds[b + 1]
        if hi <= lo:
            continue
        bucket_vals = np.sort(sorted_values[lo:hi])
        mean[b] = sums[b] / counts[b]
        q25[b] = nearest_rank_quantile(bucket_vals, 0.25)
        q75[b] = nearest_rank_quantile(bucket_vals, 0.75)
    return StaticProfile(
        station_id=station_id,
        mean=mean,
        q25=q25,
        q75=q75,
        count=counts,
        weekday_conditioned=weekday_conditioned,
    )


def build_static_profiles(
    train_series: Sequence[StationSeries], weekday_conditioned: bool = False
) -> ProfileSet:
    """Compute per-station profiles and the pooled global profile.

    Statistics must only ever see training data; callers are responsible
    for passing the train side of a split here.
    """
    if not train_series:
        raise DataError("cannot build profiles from an empty training set")
    n_buckets = SLOTS_PER_WEEK if weekday_conditioned else SLOTS_PER_DAY
    by_station: dict[str, list[StationSeries]] = {}
    for s in train_series:
        by_station.setdefault(s.station_id, []).append(s)
    stations: dict[str, StaticProfile] = {}
    all_buckets: list[np.ndarray] = []
    all_values: list[np.ndarray] = []
    for station_id in sorted(by_station):
        parts = by_station[station_id]
        slots = np.concatenate([p.epoch_slots() for p in parts])
        values = np.concatenate([p.occupancy for p in parts]).astype(np.float64)
        sod = slot_of_day_of(slots)
        if weekday_conditioned:
            bucket_idx = weekday_of(slots) * SLOTS_PER_DAY + sod
        else:
            bucket_idx = sod
        stations[station_id] = _profile_from_values(
            station_id, bucket_idx, values, n_buckets, weekday_conditioned
        )
        all_buckets.append(bucket_idx)
        all_values.append(values)
    global_profile = _profile_from_values(
        GLOBAL_STATION,
        np.concatenate(all_buckets),
        np.concatenate(all_values),
        n_buckets,
        weekday_conditioned,
    )
    return ProfileSet(
        stations=stations,
        global_profile=global_profile,
        weekday_conditioned=weekday_conditioned,
    )


def static_rows_for_window(profiles: ProfileSet, window: Window) -> StaticRows:
    """Profile values at the window's target slots, one row per feature."""
    profile = profiles.lookup(window.station_id)
    buckets = profile.bucket_of(window.target_epoch_slots())
    return StaticRows(
        mean=profile.mean[buckets],
        q25=profile.q25[buckets],
        q75=profile.q75[buckets],
    )


def static_rows_batch(profiles: ProfileSet, windows: Sequence[Window]) -> np.ndarray:
    """Stacked static rows for many windows, shape (n_windows, 3, output_slots)."""
    if not windows:
        return np.zeros((0, 3, 0), dtype=np.float64)
    out = np.empty((len(windows), 3, windows[0].output_slots), dtype=np.float64)
    for i, w in enumerate(windows):
        rows = static_rows_for_window(profiles, w)
        out[i, 0] = rows.mean
        out[i, 1] = rows.q25
        out[i, 2] = rows.q75
    return out


def save_profiles_csv(profiles: ProfileSet, dest: str | Path | TextIO) -> None:
    """Write a ProfileSet as CSV, one row per (station, bucket)."""
    if isinstance(dest, (str, Path)):
        stream: TextIO = open(dest, "w", newline="")
        owned = True
    else:
        stream, owned = dest, False
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(PROFILE_CSV_HEADER)
        entries: list[StaticProfile] = [
            profiles.stations[sid] for sid in sorted(profiles.stations)
        ]
        entries.append(profiles.global_profile)
        for prof in entries:
            for b in range(prof.n_buckets):
                writer.writerow(
                    [
                        prof.station_id,
                        b,
                        repr(float(prof.mean[b])),
                        repr(float(prof.q25[b])),
                        repr(float(prof.q75[b])),
                        int(prof.count[b]),
                    ]
                )
    finally:
        if owned:
            stream.close()


def load_profiles_csv(source: str | Path | TextIO) -> ProfileSet:
    """Read a ProfileSet written by :func:`save_profiles_csv`."""
    if isinstance(source, (str, Path)):
        try:
            stream: TextIO = open(source, "r", newline="")
        except OSError as exc:
            raise DataError(f"cannot read {source}: {exc}") from None
        owned = True
    else:
        stream, owned = source, False
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header != PROFILE_CSV_HEADER:
            raise DataError(f"bad profile header {header!r}, expected {PROFILE_CSV_HEADER!r}")
        rows: dict[str, dict[int, tuple[float, float, float, int]]] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise DataError(f"line {line_no}: expected 6 fields, got {len(row)}")
            try:
                bucket = int(row[1])
                entry = (float(row[2]), float(row[3]), float(row[4]), int(row[5]))
            except ValueError:
                raise DataError(f"line {line_no}: malformed profile row {row!r}") from None
            rows.setdefault(row[0], {})[bucket] = entry
    finally:
        if owned:
            stream.close()
    if GLOBAL_STATION not in rows:
        raise DataError(f"profile file is missing the {GLOBAL_STATION} fallback profile")
    sizes = {len(buckets) for buckets in rows.values()}
    if sizes not in ({SLOTS_PER_DAY}, {SLOTS_PER_WEEK}):
        raise DataError(f"profiles must have 96 or 672 buckets per station, got sizes {sorted(sizes)}")
    n_buckets = sizes.pop()
    weekday_conditioned = n_buckets == SLOTS_PER_WEEK
    profiles: dict[str, StaticProfile] = {}
    for station_id, buckets in rows.items():
        if sorted(buckets) != list(range(n_buckets)):
            raise DataError(f"station {station_id!r} has missing or extra profile buckets")
        mean = np.array([buckets[b][0] for b in range(n_buckets)])
        q25 = np.array([buckets[b][1] for b in range(n_buckets)])
        q75 = np.array([buckets[b][2] for b in range(n_buckets)])
        count = np.array([buckets[b][3] for b in range(n_buckets)], dtype=np.int64)
        profiles[station_id] = StaticProfile(
            station_id=station_id,
            mean=mean,
            q25=q25,
            q75=q75,
            count=count,
            weekday_conditioned=weekday_conditioned,
        )
    global_profile = profiles.pop(GLOBAL_STATION)
    return ProfileSet(
        stations=profiles,
        global_profile=global_profile,
        weekday_conditioned=weekday_conditioned,
    )
