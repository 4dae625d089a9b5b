"""Feature vectors for activation forecasting.

Each prediction point (day, slot) gets lag states, calendar one-hots,
days-since-last-operation, season, per-lag missing flags, and configurable
multiplicative interactions between blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .ingest import ActivationSeries

WARMUP_DAYS = 7

SEASONS = ("winter", "spring", "summer", "autumn")
_SEASON_OF_MONTH = {12: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1, 6: 2, 7: 2, 8: 2, 9: 3, 10: 3, 11: 3}

DEFAULT_INTERACTIONS = (("hour_of_day", "day_of_week"), ("is_weekend", "hour_of_day"))


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered named feature blocks for one resolution.

    Block order is fixed: lag states, hour_of_day, day_of_week, is_weekend,
    last_operation, season, missing flags, then interactions.
    """

    resolution: str
    blocks: tuple[tuple[str, int], ...]
    interactions: tuple[tuple[str, str], ...]

    @classmethod
    def for_resolution(
        cls, resolution: str, interactions: Optional[tuple[tuple[str, str], ...]] = None
    ) -> "FeatureLayout":
        if resolution in ("hourly", "group"):
            base = [
                ("last24", 24),
                ("hour_of_day", 24),
                ("day_of_week", 7),
                ("is_weekend", 1),
                ("last_operation", 7),
                ("season", 4),
                ("missing_last24", 24),
            ]
            if interactions is None:
                interactions = DEFAULT_INTERACTIONS
        elif resolution == "daily":
            base = [
                ("last7", 7),
                ("day_of_week", 7),
                ("is_weekend", 1),
                ("last_operation", 7),
                ("season", 4),
                ("missing_last7", 7),
            ]
            if interactions is None:
                interactions = ()
        else:
            raise ValidationError(f"unknown resolution {resolution!r}")
        sizes = dict(base)
        blocks = list(base)
        for a, b in interactions:
            if a not in sizes or b not in sizes:
                raise ValidationError(f"interaction references unknown block ({a}, {b})")
            blocks.append((f"{a}*{b}", sizes[a] * sizes[b]))
        return cls(resolution=resolution, blocks=tuple(blocks), interactions=tuple(interactions))

    @property
    def width(self) -> int:
        return sum(size for _, size in self.blocks)

    def offset(self, name: str) -> int:
        pos = 0
        for block, size in self.blocks:
            if block == name:
                return pos
            pos += size
        raise ValidationError(f"no block named {name!r}")

    def size(self, name: str) -> int:
        for block, size in self.blocks:
            if block == name:
                return size
        raise ValidationError(f"no block named {name!r}")

    def slice_of(self, name: str) -> slice:
        start = self.offset(name)
        return slice(start, start + self.size(name))

    def feature_names(self) -> list[str]:
        names = []
        for block, size in self.blocks:
            names.extend(f"{block}[{i}]" for i in range(size))
        return names

    def to_json(self) -> dict:
        return {
            "resolution": self.resolution,
            "blocks": [[n, s] for n, s in self.blocks],
            "interactions": [list(p) for p in self.interactions],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FeatureLayout":
        return cls(
            resolution=data["resolution"],
            blocks=tuple((str(n), int(s)) for n, s in data["blocks"]),
            interactions=tuple((a, b) for a, b in data["interactions"]),
        )


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    keys: tuple[tuple[int, int], ...]  # (day, slot) per row
    layout: FeatureLayout = field(repr=False)

    def __post_init__(self):
        if self.rows.shape != (len(self.labels), self.layout.width):
            raise ValidationError("feature matrix shape mismatch")

    def __len__(self) -> int:
        return len(self.labels)


def _lag_source(x: ActivationSeries) -> ActivationSeries:
    """Series supplying recent-state lags: group rows read device history
    from the hourly series they were aggregated from."""
    if x.resolution == "group":
        if x.hourly_parent is None:
            raise ValidationError("group series lost its hourly parent; rebuild via to_group")
        return x.hourly_parent
    return x


def season_of(month: int) -> int:
    return _SEASON_OF_MONTH[month]


def _last_operation_position(x: ActivationSeries, day: int) -> int:
    """Index 0..6 for n in {1,...,6,>=7} days since the last active day."""
    for n in range(1, 7):
        if x.days[day - n].any():
            return n - 1
    return 6


def extract(x: ActivationSeries, day: int, slot: int, layout: FeatureLayout) -> np.ndarray:
    """Feature vector for prediction point (day, slot)."""
    if layout.resolution != x.resolution:
        raise ValidationError("layout resolution does not match series")
    if not 0 <= slot < x.slots_per_day:
        raise ValidationError(f"slot {slot} out of range for {x.resolution}")
    if day < WARMUP_DAYS:
        raise InsufficientDataError("prediction day is inside the warm-up window")
    v = np.zeros(layout.width)

    if x.resolution == "daily":
        lag = x.days[day - 7 : day, 0].astype(float)
        lag_missing = x.missing[day - 7 : day, 0].astype(float)
        v[layout.slice_of("last7")] = lag
        v[layout.slice_of("missing_last7")] = lag_missing
    else:
        source = _lag_source(x)
        hour = slot if x.resolution == "hourly" else x.group_spec.first_hour(slot)
        flat_values = source.days.reshape(-1)
        flat_missing = source.missing.reshape(-1)
        idx = day * 24 + hour
        lag = flat_values[idx - 24 : idx].astype(float)
        lag_missing = flat_missing[idx - 24 : idx].astype(float)
        v[layout.slice_of("last24")] = lag
        v[layout.slice_of("missing_last24")] = lag_missing
        v[layout.offset("hour_of_day") + hour] = 1.0

    dow = x.weekday(day)
    v[layout.offset("day_of_week") + dow] = 1.0
    v[layout.offset("is_weekend")] = 1.0 if dow >= 5 else 0.0
    v[layout.offset("last_operation") + _last_operation_position(x, day)] = 1.0
    v[layout.offset("season") + season_of(x.date_of(day).month)] = 1.0

    for a, b in layout.interactions:
        va = v[layout.slice_of(a)]
        vb = v[layout.slice_of(b)]
        v[layout.slice_of(f"{a}*{b}")] = np.outer(va, vb).reshape(-1)
    return v


def build_matrix(
    x: ActivationSeries,
    layout: FeatureLayout,
    first_day: Optional[int] = None,
    last_day: Optional[int] = None,
) -> FeatureMatrix:
    """One row per (day, slot) for days in [first_day, last_day).

    Defaults to every day after the warm-up window.  Day indices refer to
    x; passing bounds lets train/test matrices share one series so test
    rows keep real history across the split.
    """
    lo = WARMUP_DAYS if first_day is None else max(first_day, WARMUP_DAYS)
    hi = x.n_days if last_day is None else min(last_day, x.n_days)
    if lo >= hi:
        raise InsufficientDataError("no prediction days remain after warm-up")
    rows = []
    labels = []
    keys = []
    for day in range(lo, hi):
        for slot in range(x.slots_per_day):
            rows.append(extract(x, day, slot, layout))
            labels.append(int(x.days[day, slot]))
            keys.append((day, slot))
    return FeatureMatrix(
        rows=np.asarray(rows),
        labels=np.asarray(labels, dtype=np.int8),
        keys=tuple(keys),
        layout=layout,
    )
