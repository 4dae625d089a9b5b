"""Loading of device readings and market data, gap filling, and aggregation
of 15-minute readings into hourly / group / daily activation series.

Conventions: hours are 0-based (0..23), day boundary is local midnight,
observation gaps are stored as value 0 with a parallel ``missing`` mask.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError

QUARTERS_PER_DAY = 96
READING_STRIDE = timedelta(minutes=15)

RESOLUTIONS = ("hourly", "group", "daily")


@dataclass(frozen=True)
class ReadingSeries:
    """Timestamped 15-minute average power readings for one device.

    values[i] is the average power in watts over the interval starting at
    start + i * 15min; missing[i] marks an observation gap (value forced
    to 0, the inactive state).
    """

    device_id: str
    start: datetime
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        if len(self.values) != len(self.missing):
            raise ValidationError("values and missing masks differ in length")
        observed = self.values[~self.missing]
        if len(observed) and observed.min() < 0:
            raise ValidationError("negative power reading")
        if self.start.minute % 15 or self.start.second or self.start.microsecond:
            raise ValidationError(f"series start {self.start} is not 15-minute aligned")

    def __len__(self) -> int:
        return len(self.values)

    def timestamp(self, i: int) -> datetime:
        return self.start + i * READING_STRIDE


@dataclass(frozen=True)
class GroupSpec:
    """Ordered partition of the 24 hours into disjoint groups."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        flat = [h for g in self.groups for h in g]
        if sorted(flat) != list(range(24)):
            raise ValidationError("groups must partition hours 0..23")
        if not self.groups:
            raise ValidationError("at least one group required")

    def __len__(self) -> int:
        return len(self.groups)

    def group_of(self, hour: int) -> int:
        for gi, g in enumerate(self.groups):
            if hour in g:
                return gi
        raise ValidationError(f"hour {hour} not covered")

    def first_hour(self, gi: int) -> int:
        return min(self.groups[gi])

    def to_json(self) -> list:
        return [list(g) for g in self.groups]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[int]]) -> "GroupSpec":
        return cls(tuple(tuple(int(h) for h in g) for g in data))


@dataclass(frozen=True)
class ActivationSeries:
    """Binary activation labels at hourly, group, or daily resolution.

    days has shape (n_days, slots_per_day); missing is the parallel
    aggregated gap mask.  hourly_parent carries the hourly series a group
    aggregation was built from (lag features read device history from it).
    """

    resolution: str
    device_id: str
    start_date: date
    days: np.ndarray
    missing: np.ndarray
    group_spec: Optional[GroupSpec] = None
    hourly_parent: Optional["ActivationSeries"] = field(default=None, repr=False)

    def __post_init__(self):
        if self.resolution not in RESOLUTIONS:
            raise ValidationError(f"unknown resolution {self.resolution!r}")
        if self.days.shape != self.missing.shape:
            raise ValidationError("days and missing masks differ in shape")
        expected = {"hourly": 24, "daily": 1}.get(self.resolution)
        if expected is not None and self.slots_per_day != expected:
            raise ValidationError(
                f"{self.resolution} series must have {expected} slots per day"
            )
        if self.resolution == "group":
            if self.group_spec is None:
                raise ValidationError("group series requires a group_spec")
            if self.slots_per_day != len(self.group_spec):
                raise ValidationError("slots per day must match group count")
        if not np.isin(self.days, (0, 1)).all():
            raise ValidationError("activation slots must be 0 or 1")

    @property
    def n_days(self) -> int:
        return self.days.shape[0]

    @property
    def slots_per_day(self) -> int:
        return self.days.shape[1]

    def weekday(self, day: int) -> int:
        """Monday=0 .. Sunday=6 for day index `day`."""
        return (self.start_date + timedelta(days=day)).weekday()

    def date_of(self, day: int) -> date:
        return self.start_date + timedelta(days=day)


@dataclass(frozen=True)
class MarketSeries:
    """Per-hour spot price and regulation volumes/prices.

    Volumes are MWh: v_up >= 0, v_down <= 0, at most one nonzero per hour.
    Hours are contiguous from `start`.
    """

    start: datetime
    spot: np.ndarray
    v_up: np.ndarray
    v_down: np.ndarray
    p_up: np.ndarray
    p_down: np.ndarray

    def __post_init__(self):
        n = len(self.spot)
        for name in ("v_up", "v_down", "p_up", "p_down"):
            if len(getattr(self, name)) != n:
                raise ValidationError("market columns differ in length")
        if (self.v_up < 0).any():
            raise ValidationError("up-regulation volume must be >= 0")
        if (self.v_down > 0).any():
            raise ValidationError("down-regulation volume must be <= 0")
        both = (self.v_up > 0) & (self.v_down < 0)
        if both.any():
            hour = int(np.argmax(both))
            raise ValidationError(
                f"hour {self.start + timedelta(hours=hour)} has both regulation volumes nonzero"
            )

    def __len__(self) -> int:
        return len(self.spot)

    def index_of(self, when: datetime) -> int:
        delta = when - self.start
        hours = delta / timedelta(hours=1)
        if hours != int(hours):
            raise ValidationError(f"{when} is not on the hourly grid")
        return int(hours)

    @property
    def imbalance(self) -> np.ndarray:
        """Signed imbalance m(t) = v_u(t) - |v_d(t)| (v_down stored <= 0)."""
        return self.v_up + self.v_down


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"row {row}: cannot parse timestamp {text!r}") from None


def load_readings(path: str, expected_stride: timedelta = READING_STRIDE) -> ReadingSeries:
    """Read a device CSV (timestamp,device_id,watts) onto the 15-min grid.

    Grid points with no row, or rows with an empty watts field, become
    observation gaps: missing=True, value 0.
    """
    rows: dict[datetime, float | None] = {}
    device_id = ""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:3]] != ["timestamp", "device_id", "watts"]:
            raise ValidationError(f"{path}: expected header timestamp,device_id,watts")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 3:
                raise ValidationError(f"row {lineno}: expected 3 columns")
            ts = _parse_timestamp(row[0], lineno)
            device_id = device_id or row[1].strip()
            if ts in rows:
                raise ValidationError(f"row {lineno}: duplicate timestamp {row[0].strip()}")
            watts_text = row[2].strip()
            if not watts_text:
                rows[ts] = None
                continue
            try:
                watts = float(watts_text)
            except ValueError:
                raise ValidationError(f"row {lineno}: bad watts value {row[2]!r}") from None
            if watts < 0:
                raise ValidationError(f"row {lineno}: negative power {watts}")
            rows[ts] = watts
    if not rows:
        raise InsufficientDataError(f"{path}: no data rows")
    start = min(rows)
    end = max(rows)
    span = end - start
    steps = span / expected_stride
    if steps != int(steps):
        raise ValidationError(f"{path}: timestamps do not align to a {expected_stride} grid")
    n = int(steps) + 1
    values = np.zeros(n)
    missing = np.ones(n, dtype=bool)
    for ts, watts in rows.items():
        offset = (ts - start) / expected_stride
        if offset != int(offset):
            raise ValidationError(f"{path}: timestamp {ts} off the {expected_stride} grid")
        if watts is not None:
            values[int(offset)] = watts
            missing[int(offset)] = False
    return ReadingSeries(device_id=device_id, start=start, values=values, missing=missing)


_MARKET_COLUMNS = {
    "date": "date",
    "hour": "hour",
    "up-regulation volume": "v_up",
    "down-regulation volume": "v_down",
    "up-regulation price": "p_up",
    "down-regulation price": "p_down",
    "spot price": "spot",
}


def _parse_market_date(text: str, row: int) -> date:
    text = text.strip()
    for parser in (date.fromisoformat, _parse_mdy):
        try:
            return parser(text)
        except ValueError:
            continue
    raise ValidationError(f"row {row}: cannot parse date {text!r}")


def _parse_mdy(text: str) -> date:
    parts = text.split("/")
    if len(parts) != 3:
        raise ValueError(text)
    m, d, y = (int(p) for p in parts)
    return date(y, m, d)


def load_market(path: str) -> MarketSeries:
    """Read an hourly market CSV with the standard seven columns.

    Column headers are matched case-insensitively; rows must be contiguous
    hours and each row may carry at most one nonzero regulation volume.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file")
        normalized = [c.strip().lower() for c in header]
        positions = {}
        for key, name in _MARKET_COLUMNS.items():
            if key not in normalized:
                raise ValidationError(f"{path}: missing column {key!r}")
            positions[name] = normalized.index(key)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            day = _parse_market_date(row[positions["date"]], lineno)
            hour = int(row[positions["hour"]])
            if not 0 <= hour <= 23:
                raise ValidationError(f"row {lineno}: hour {hour} out of range")
            try:
                numbers = {
                    name: float(row[positions[name]])
                    for name in ("v_up", "v_down", "p_up", "p_down", "spot")
                }
            except ValueError:
                raise ValidationError(f"row {lineno}: non-numeric market value") from None
            if numbers["v_up"] > 0 and numbers["v_down"] < 0:
                raise ValidationError(f"row {lineno}: both regulation volumes nonzero")
            if numbers["v_up"] < 0:
                raise ValidationError(f"row {lineno}: up-regulation volume negative")
            if numbers["v_down"] > 0:
                raise ValidationError(f"row {lineno}: down-regulation volume positive")
            when = datetime.combine(day, datetime.min.time()) + timedelta(hours=hour)
            records.append((when, numbers))
    if not records:
        raise InsufficientDataError(f"{path}: no market rows")
    records.sort(key=lambda r: r[0])
    start = records[0][0]
    for i, (when, _) in enumerate(records):
        if when != start + timedelta(hours=i):
            raise ValidationError(f"{path}: market hours not contiguous at {when}")
    cols = {name: np.array([rec[1][name] for rec in records]) for name in ("spot", "v_up", "v_down", "p_up", "p_down")}
    return MarketSeries(start=start, **cols)


def _day_grid(r: ReadingSeries) -> tuple[int, int]:
    """(first index at a local midnight, number of whole days available)."""
    midnight = r.start.replace(hour=0, minute=0, second=0, microsecond=0)
    if midnight < r.start:
        midnight += timedelta(days=1)
    first = int((midnight - r.start) / READING_STRIDE)
    n_days = (len(r) - first) // QUARTERS_PER_DAY
    return first, n_days


def hourly_energy(r: ReadingSeries) -> np.ndarray:
    """kWh consumed per hour, shape (n_days, 24), from whole days only."""
    first, n_days = _day_grid(r)
    if n_days < 1:
        raise InsufficientDataError("series shorter than one full day")
    kwh = r.values[first : first + n_days * QUARTERS_PER_DAY] * 0.25 / 1000.0
    return kwh.reshape(n_days, 24, 4).sum(axis=2)


def to_hourly(
    r: ReadingSeries,
    threshold_watts: float,
    label_operating_hours: bool = False,
) -> ActivationSeries:
    """Aggregate readings into hourly activation labels.

    A slot is 1 when the device switches on within the hour: some reading
    >= threshold while the immediately preceding reading is below it.  With
    label_operating_hours, every hour containing a reading >= threshold is
    marked instead.  A slot is missing only when all four readings are.
    """
    if threshold_watts <= 0:
        raise ValidationError("threshold_watts must be positive")
    first, n_days = _day_grid(r)
    if n_days < 1:
        raise InsufficientDataError("series shorter than one full day")
    end = first + n_days * QUARTERS_PER_DAY
    active = r.values >= threshold_watts
    # Gap-filled quarters read as inactive; the quarter before the series is too.
    prev = np.concatenate(([False], active[:-1]))
    if label_operating_hours:
        marks = active
    else:
        marks = active & ~prev
    marks = marks[first:end].reshape(n_days, 24, 4)
    gaps = r.missing[first:end].reshape(n_days, 24, 4)
    days = marks.any(axis=2).astype(np.int8)
    missing = gaps.all(axis=2)
    start_date = (r.start + first * READING_STRIDE).date()
    return ActivationSeries(
        resolution="hourly",
        device_id=r.device_id,
        start_date=start_date,
        days=days,
        missing=missing,
    )


def to_group(h: ActivationSeries, spec: GroupSpec) -> ActivationSeries:
    """Aggregate hourly labels to group resolution: 1 if any member hour is 1."""
    if h.resolution != "hourly":
        raise ValidationError("to_group expects an hourly series")
    cols_value = np.stack([h.days[:, list(g)].any(axis=1) for g in spec.groups], axis=1)
    cols_missing = np.stack([h.missing[:, list(g)].all(axis=1) for g in spec.groups], axis=1)
    return ActivationSeries(
        resolution="group",
        device_id=h.device_id,
        start_date=h.start_date,
        days=cols_value.astype(np.int8),
        missing=cols_missing,
        group_spec=spec,
        hourly_parent=h,
    )


def to_daily(h: ActivationSeries) -> ActivationSeries:
    """Aggregate hourly labels to one slot per day (any hour active)."""
    if h.resolution != "hourly":
        raise ValidationError("to_daily expects an hourly series")
    days = h.days.any(axis=1).astype(np.int8).reshape(-1, 1)
    missing = h.missing.all(axis=1).reshape(-1, 1)
    return ActivationSeries(
        resolution="daily",
        device_id=h.device_id,
        start_date=h.start_date,
        days=days,
        missing=missing,
        hourly_parent=h,
    )


def derive_groups(h: ActivationSeries, m: int) -> GroupSpec:
    """Contiguous partition of hours 0..23 into m groups minimizing the
    within-group variance of per-hour activation frequency.

    Exact dynamic program over the 24 points; equal-cost ties prefer the
    most size-balanced partition, then the first found.
    """
    if h.resolution != "hourly":
        raise ValidationError("derive_groups expects an hourly series")
    if not 1 <= m <= 24:
        raise ValidationError(f"group count {m} outside 1..24")
    freq = h.days.mean(axis=0)
    # Segment cost: sum of squared deviations from the segment mean.
    pref = np.concatenate(([0.0], np.cumsum(freq)))
    pref2 = np.concatenate(([0.0], np.cumsum(freq**2)))

    def sse(a: int, b: int) -> float:  # hours a..b-1
        s = pref[b] - pref[a]
        s2 = pref2[b] - pref2[a]
        n = b - a
        return s2 - s * s / n

    target = 24.0 / m
    INF = (math.inf, math.inf)
    # dp[j][i]: best (sse, size-imbalance) for first i hours in j segments.
    dp = [[INF] * 25 for _ in range(m + 1)]
    choice = [[0] * 25 for _ in range(m + 1)]
    dp[0][0] = (0.0, 0.0)
    for j in range(1, m + 1):
        for i in range(j, 25):
            best = INF
            best_s = 0
            for s in range(j - 1, i):
                prev = dp[j - 1][s]
                if prev == INF:
                    continue
                cand = (prev[0] + sse(s, i), prev[1] + (i - s - target) ** 2)
                if cand < best:
                    best = cand
                    best_s = s
            dp[j][i] = best
            choice[j][i] = best_s
    bounds = [24]
    i = 24
    for j in range(m, 0, -1):
        i = choice[j][i]
        bounds.append(i)
    bounds.reverse()
    groups = tuple(tuple(range(bounds[k], bounds[k + 1])) for k in range(m))
    return GroupSpec(groups)


def split(x: ActivationSeries, train_fraction: float) -> tuple[ActivationSeries, ActivationSeries]:
    """Chronological split at floor(n_days * train_fraction) days."""
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must be in (0, 1)")
    if x.n_days < 2:
        raise InsufficientDataError("need at least 2 days to split")
    cut = int(x.n_days * train_fraction)

    def piece(lo: int, hi: int) -> ActivationSeries:
        parent = x.hourly_parent
        if parent is not None:
            parent = piece_of(parent, lo, hi)
        return ActivationSeries(
            resolution=x.resolution,
            device_id=x.device_id,
            start_date=x.start_date + timedelta(days=lo),
            days=x.days[lo:hi],
            missing=x.missing[lo:hi],
            group_spec=x.group_spec,
            hourly_parent=parent,
        )

    def piece_of(s: ActivationSeries, lo: int, hi: int) -> ActivationSeries:
        return ActivationSeries(
            resolution=s.resolution,
            device_id=s.device_id,
            start_date=s.start_date + timedelta(days=lo),
            days=s.days[lo:hi],
            missing=s.missing[lo:hi],
            group_spec=s.group_spec,
        )

    return piece(0, cut), piece(cut, x.n_days)
