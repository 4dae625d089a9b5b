"""Historical-average energy profiles for predicted activations.

Operation runs are detected on the raw 15-minute grid: a run starts when a
reading reaches the watt threshold with the previous reading below it, and
continues while readings stay at or above the threshold.  Hourly and group
matching follow runs across midnight; daily matching cuts runs at the day
boundary.  Averaging counts absent positions as zero by default, so the
j-th unit is the plain mean over all collected runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .ingest import QUARTERS_PER_DAY, ReadingSeries, _day_grid

AVERAGING_MODES = ("literal", "present_only")


@dataclass(frozen=True)
class EnergyProfile:
    """Energy demand per time unit of one (possibly averaged) operation."""

    units: np.ndarray

    def __post_init__(self):
        if len(self.units) < 1:
            raise ValidationError("profile must have at least one unit")
        if (self.units < 0).any():
            raise ValidationError("profile units must be >= 0")

    @property
    def duration(self) -> int:
        return len(self.units)

    @property
    def total(self) -> float:
        return float(self.units.sum())


@dataclass(frozen=True)
class Run:
    """One detected operation: quarter offsets are relative to the series'
    first full day, so day = start // 96 and hour = (start % 96) // 4."""

    start: int
    quarters: np.ndarray  # kWh per 15 minutes

    @property
    def day(self) -> int:
        return self.start // QUARTERS_PER_DAY

    @property
    def hour(self) -> int:
        return (self.start % QUARTERS_PER_DAY) // 4


def _kwh(watts: np.ndarray) -> np.ndarray:
    return watts * 0.25 / 1000.0


def collect_runs(r: ReadingSeries, threshold_watts: float) -> list[Run]:
    """All runs starting within the series' whole-day window, following
    each run across midnight until demand drops below the threshold."""
    first, n_days = _day_grid(r)
    if n_days < 1:
        raise InsufficientDataError("series shorter than one full day")
    active = r.values >= threshold_watts
    end_of_days = first + n_days * QUARTERS_PER_DAY
    runs = []
    i = first
    while i < end_of_days:
        if active[i] and (i == 0 or not active[i - 1]):
            j = i
            while j < len(r.values) and active[j]:
                j += 1
            runs.append(Run(start=i - first, quarters=_kwh(r.values[i:j])))
            i = j
        else:
            i += 1
    return runs


def collect_runs_daily(r: ReadingSeries, threshold_watts: float) -> list[Run]:
    """Runs delimited within each day: maximal active blocks, truncated at
    the day boundary (no continuation across midnight)."""
    first, n_days = _day_grid(r)
    if n_days < 1:
        raise InsufficientDataError("series shorter than one full day")
    active = r.values >= threshold_watts
    runs = []
    for day in range(n_days):
        base = first + day * QUARTERS_PER_DAY
        q = 0
        while q < QUARTERS_PER_DAY:
            if active[base + q]:
                j = q
                while j < QUARTERS_PER_DAY and active[base + j]:
                    j += 1
                runs.append(
                    Run(
                        start=day * QUARTERS_PER_DAY + q,
                        quarters=_kwh(r.values[base + q : base + j]),
                    )
                )
                q = j
            else:
                q += 1
    return runs


def average_profiles(
    patterns: Sequence[np.ndarray], averaging: str = "literal"
) -> EnergyProfile:
    """Average a set of unit-energy sequences into one profile.

    Duration is the ceiling of the mean run length.  In literal mode every
    unit index divides by the total run count (absent positions count as
    zero); present_only averages only the runs long enough to reach the
    index.
    """
    if averaging not in AVERAGING_MODES:
        raise ValidationError(f"unknown averaging mode {averaging!r}")
    if not patterns:
        raise InsufficientDataError("no runs to average")
    n = len(patterns)
    duration = math.ceil(sum(len(p) for p in patterns) / n)
    units = np.zeros(duration)
    for j in range(duration):
        present = [p[j] for p in patterns if j < len(p)]
        if averaging == "literal":
            units[j] = sum(present) / n
        else:
            units[j] = sum(present) / len(present)
    return EnergyProfile(units=units)


def _profile_from(runs: Iterable[Run], fallback: Sequence[Run], averaging: str) -> EnergyProfile:
    selected = [run.quarters for run in runs]
    if not selected:
        selected = [run.quarters for run in fallback]
    if not selected:
        raise InsufficientDataError("no historical activations to build a profile from")
    return average_profiles(selected, averaging)


def hourly_profile(
    r: ReadingSeries, threshold_watts: float, hour: int, averaging: str = "literal"
) -> EnergyProfile:
    """Average profile of historical runs starting at the given hour,
    falling back to all historical runs when that hour has none."""
    runs = collect_runs(r, threshold_watts)
    return _profile_from((run for run in runs if run.hour == hour), runs, averaging)


def group_profile(
    r: ReadingSeries,
    threshold_watts: float,
    group_hours: Sequence[int],
    averaging: str = "literal",
) -> EnergyProfile:
    """Average profile of runs starting within any of the group's hours."""
    hours = set(group_hours)
    runs = collect_runs(r, threshold_watts)
    return _profile_from((run for run in runs if run.hour in hours), runs, averaging)


def daily_profile(
    r: ReadingSeries,
    threshold_watts: float,
    weekday: int,
    start_weekday: int,
    averaging: str = "literal",
) -> EnergyProfile:
    """Average profile of day-local runs on the given weekday (Mon=0).

    start_weekday is the weekday of the series' first full day.  Falls back
    to runs from every day when the weekday never appears active.
    """
    runs = collect_runs_daily(r, threshold_watts)
    matching = (run for run in runs if (start_weekday + run.day) % 7 == weekday)
    return _profile_from(matching, runs, averaging)


def to_hourly_units(profile: EnergyProfile) -> EnergyProfile:
    """Sum quarter-grid units into hourly units (last hour may be partial)."""
    q = profile.units
    hours = math.ceil(len(q) / 4)
    units = np.array([q[4 * h : 4 * (h + 1)].sum() for h in range(hours)])
    return EnergyProfile(units=units)
