"""Synthetic occupancy data with realistic daily and weekly structure.

Each station gets an archetype (office, retail, residential, uniform)
that fixes a weekly intensity shape over the 672 week slots.  Occupancy
then follows a two-state Markov chain per station: a free station
becomes occupied in the next slot with probability ``scale * shape`` (a
time-varying hazard), and an occupied station frees up with probability
``1 / mean_dwell_slots``, giving geometrically distributed session
lengths.

The single scale factor is calibrated by bisection against the
deterministic weekly steady state of the chains so the expected global
occupancy matches the configured target rate.  Calibration uses the
archetype assignment actually drawn, so the only remaining deviation in
the realized rate is simulation noise.  The first simulated week is a
burn-in and is discarded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import (
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    ChargingRecord,
    TimeSlot,
    slot_of_day_of,
    weekday_of,
)
from .errors import ConfigError, DataError
from .numerics import make_rng

# 2020-08-03 00:00 UTC, a Monday.
DEFAULT_START = TimeSlot(1773792)

ARCHETYPE_NAMES = ("office", "retail", "residential", "uniform")

DEFAULT_MIX = (
    ("office", 0.30),
    ("retail", 0.25),
    ("residential", 0.25),
    ("uniform", 0.20),
)


def _day_bump(center_hour: float, half_width_hours: float, amplitude: float) -> np.ndarray:
    """Raised-cosine bump over the 96 slots of one day."""
    hours = (np.arange(SLOTS_PER_DAY) + 0.5) / 4.0
    x = np.abs(hours - center_hour) / half_width_hours
    return amplitude * np.where(x < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(x, 1.0))), 0.0)


def archetype_shape(name: str) -> np.ndarray:
    """Relative arrival intensity per (weekday, slot of day), shape (7, 96).

    Values are relative weights in [0, 1]; the calibrated scale turns
    them into per-slot occupation hazards.  The shapes are deliberately
    contrasting: offices live on weekday business hours, retail peaks on
    Saturday and dies on Sunday, residential stations peak in the
    evening, and the uniform archetype has no structure at all.
    """
    days = np.zeros((7, SLOTS_PER_DAY))
    if name == "office":
        weekday = _day_bump(13.0, 6.5, 1.0)
        for d in range(5):
            days[d] = weekday
        days[5] = 0.02
        days[6] = 0.02
    elif name == "retail":
        weekday = _day_bump(15.0, 6.0, 0.55)
        for d in range(5):
            days[d] = weekday
        days[5] = _day_bump(14.0, 6.0, 0.9)
        days[6] = 0.05
    elif name == "residential":
        evening = _day_bump(20.5, 4.0, 0.85) + _day_bump(7.5, 2.0, 0.3)
        for d in range(5):
            days[d] = evening
        weekend = evening + _day_bump(14.0, 5.0, 0.35)
        days[5] = weekend
        days[6] = weekend
    elif name == "uniform":
        days[:] = 0.30
    else:
        raise ConfigError(f"unknown archetype {name!r}, expected one of {ARCHETYPE_NAMES}")
    return np.clip(days, 0.0, 1.0)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the generator; defaults give 50 stations for 20 weeks."""

    n_stations: int = 50
    n_weeks: int = 20
    target_rate: float = 0.088
    mean_dwell_slots: float = 6.0
    seed: int = 0
    start: TimeSlot = DEFAULT_START
    archetype_mix: tuple[tuple[str, float], ...] = DEFAULT_MIX

    def __post_init__(self) -> None:
        if self.n_stations < 1:
            raise ConfigError(f"n_stations must be >= 1, got {self.n_stations}")
        if self.n_weeks < 1:
            raise ConfigError(f"n_weeks must be >= 1, got {self.n_weeks}")
        if not 0.0 < self.target_rate < 1.0:
            raise ConfigError(f"target_rate must be in (0, 1), got {self.target_rate}")
        if self.mean_dwell_slots <= 1.0:
            raise ConfigError(f"mean_dwell_slots must be > 1, got {self.mean_dwell_slots}")
        if not self.archetype_mix:
            raise ConfigError("archetype_mix must not be empty")
        for name, weight in self.archetype_mix:
            if name not in ARCHETYPE_NAMES:
                raise ConfigError(f"unknown archetype {name!r} in mix")
            if weight < 0:
                raise ConfigError(f"archetype weight for {name!r} must be >= 0, got {weight}")
        if sum(w for _, w in self.archetype_mix) <= 0:
            raise ConfigError("archetype mix weights must sum to a positive value")


def _week_bucket_order(start: TimeSlot) -> np.ndarray:
    """Bucket index (weekday * 96 + slot of day) for one week from ``start``."""
    slots = start.epoch_slot + np.arange(SLOTS_PER_WEEK, dtype=np.int64)
    return weekday_of(slots) * SLOTS_PER_DAY + slot_of_day_of(slots)


def _expected_rate(
    hazards: np.ndarray, weights: np.ndarray, mean_dwell: float, order: np.ndarray
) -> float:
    """Weekly steady-state occupancy of the chains, mixed by weights.

    Iterates the deterministic occupancy-probability recursion
    p <- p * (1 - 1/dwell) + (1 - p) * q_t over the periodic weekly
    schedule until it settles, then averages one full week.
    """
    leave = 1.0 / mean_dwell
    p = np.zeros(hazards.shape[0])
    for _ in range(8):
        for t in order:
            q = hazards[:, t]
            p = p * (1.0 - leave) + (1.0 - p) * q
    acc = 0.0
    for t in order:
        q = hazards[:, t]
        p = p * (1.0 - leave) + (1.0 - p) * q
        acc += float(weights @ p)
    return acc / SLOTS_PER_WEEK


def calibrate_scale(
    shapes: np.ndarray,
    weights: np.ndarray,
    target_rate: float,
    mean_dwell: float,
    order: np.ndarray,
) -> float:
    """Solve for the hazard scale whose steady-state occupancy hits the target.

    Args:
        shapes: per-archetype weekly intensity, shape (n_arch, 672).
        weights: archetype mixture weights summing to 1.
        target_rate: desired mean occupancy.
        mean_dwell: mean occupied dwell time in slots.
        order: weekly bucket visiting order (phase of the calendar).

    Raises:
        DataError: when even saturated hazards (probability 1 wherever
            the shape is positive) cannot reach the target.
    """

    def rate_at(scale: float) -> float:
        hazards = np.clip(scale * shapes, 0.0, 1.0)
        return _expected_rate(hazards, weights, mean_dwell, order)

    saturated = _expected_rate(
        (shapes > 0).astype(np.float64), weights, mean_dwell, order
    )
    if target_rate >= saturated:
        raise DataError(
            f"target rate {target_rate} is unachievable: saturated hazards give {saturated:.4f}"
        )
    lo, hi = 0.0, 1.0
    for _ in range(60):
        if rate_at(hi) >= target_rate:
            break
        hi *= 2.0
    else:
        raise DataError(f"could not bracket target rate {target_rate}")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if rate_at(mid) < target_rate:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def station_id_for(index: int) -> str:
    return f"S{index:03d}"


def generate_synthetic(config: SyntheticConfig) -> list[ChargingRecord]:
    """Simulate occupancy records for all stations over the configured span.

    Two runs with the same config are identical.  The simulation starts
    one week before ``config.start`` from all-free states; that burn-in
    week is discarded.
    """
    rng = make_rng(config.seed)
    names = [name for name, _ in config.archetype_mix]
    raw_weights = np.array([w for _, w in config.archetype_mix], dtype=np.float64)
    probs = raw_weights / raw_weights.sum()
    arch_idx = rng.choice(len(names), size=config.n_stations, p=probs)
    shapes = np.stack([archetype_shape(name).reshape(SLOTS_PER_WEEK) for name in names])
    counts = np.bincount(arch_idx, minlength=len(names)).astype(np.float64)
    order = _week_bucket_order(config.start)
    scale = calibrate_scale(
        shapes, counts / config.n_stations, config.target_rate, config.mean_dwell_slots, order
    )
    hazards = np.clip(scale * shapes[arch_idx], 0.0, 1.0)  # (n_stations, 672)
    leave = 1.0 / config.mean_dwell_slots
    n_slots = config.n_weeks * SLOTS_PER_WEEK
    burn_in = SLOTS_PER_WEEK
    all_slots = config.start.epoch_slot - burn_in + np.arange(burn_in + n_slots, dtype=np.int64)
    buckets = weekday_of(all_slots) * SLOTS_PER_DAY + slot_of_day_of(all_slots)
    occ = np.zeros((config.n_stations, n_slots), dtype=np.uint8)
    state = np.zeros(config.n_stations, dtype=bool)
    for step, bucket in enumerate(buckets):
        u = rng.random(config.n_stations)
        become = ~state & (u < hazards[:, bucket])
        release = state & (u < leave)
        state = (state | become) & ~release
        if step >= burn_in:
            occ[:, step - burn_in] = state
    records: list[ChargingRecord] = []
    base = config.start.epoch_slot
    for i in range(config.n_stations):
        sid = station_id_for(i)
        row = occ[i]
        records.extend(
            ChargingRecord(station_id=sid, slot=TimeSlot(base + t), occupied=int(row[t]))
            for t in range(n_slots)
        )
    return records


def occupancy_rate(records: Sequence[ChargingRecord]) -> float:
    """Fraction of records that are occupied."""
    if not records:
        raise DataError("no records")
    return float(np.mean([r.occupied for r in records]))
