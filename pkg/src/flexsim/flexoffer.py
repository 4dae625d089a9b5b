"""Micro flex-offers: a predicted activation's energy profile plus the hour
window within which its start may be scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .ingest import ActivationSeries, GroupSpec
from .profiles import EnergyProfile


@dataclass(frozen=True)
class FlexOffer:
    """Shiftable demand: hourly profile anchored at earliest_start, startable
    anywhere in [earliest_start, latest_start]."""

    earliest_start: int
    latest_start: int
    profile: EnergyProfile
    origin: tuple[int, int, str]  # (day, slot, resolution)

    def __post_init__(self):
        if self.earliest_start > self.latest_start:
            raise ValidationError("earliest_start must be <= latest_start")
        if self.earliest_start < 0:
            raise ValidationError("start hours must be non-negative")

    @property
    def tau(self) -> int:
        return self.latest_start - self.earliest_start

    @property
    def total_energy(self) -> float:
        return self.profile.total

    def to_json(self) -> dict:
        day, slot, resolution = self.origin
        return {
            "earliest_start": self.earliest_start,
            "latest_start": self.latest_start,
            "profile": [float(u) for u in self.profile.units],
            "origin": {"day": day, "slot": slot, "resolution": resolution},
        }


@dataclass(frozen=True)
class AnchorModel:
    """Historical activation frequencies used to pin group and daily
    predictions to a concrete start hour."""

    hour_freq: np.ndarray  # shape (24,)
    weekday_hour_freq: np.ndarray  # shape (7, 24)

    @classmethod
    def from_series(cls, hourly: ActivationSeries) -> "AnchorModel":
        if hourly.resolution != "hourly":
            raise ValidationError("anchor model requires an hourly series")
        hour_freq = hourly.days.mean(axis=0)
        by_dow = np.zeros((7, 24))
        counts = np.zeros(7)
        for day in range(hourly.n_days):
            dow = hourly.weekday(day)
            by_dow[dow] += hourly.days[day]
            counts[dow] += 1
        with np.errstate(invalid="ignore"):
            by_dow = np.where(counts[:, None] > 0, by_dow / np.maximum(counts[:, None], 1), 0.0)
        return cls(hour_freq=hour_freq, weekday_hour_freq=by_dow)

    def group_anchor(self, group_hours: Sequence[int]) -> int:
        hours = sorted(group_hours)
        best = max(hours, key=lambda h: (self.hour_freq[h], -h))
        return best

    def daily_anchor(self, weekday: int) -> int:
        row = self.weekday_hour_freq[weekday]
        if row.max() <= 0:
            row = self.hour_freq
        return int(max(range(24), key=lambda h: (row[h], -h)))


def assemble(
    predictions: Sequence[tuple[int, float]],
    profiles: Mapping[int, EnergyProfile],
    tau: int,
    resolution: str,
    weekday: int,
    anchors: Optional[AnchorModel] = None,
    group_spec: Optional[GroupSpec] = None,
    day: int = 0,
) -> list[FlexOffer]:
    """Turn one day's predicted activations into flex-offers.

    predictions holds (slot, probability) pairs already past the decision
    threshold.  Hourly slots anchor at their own hour; group slots at the
    member hour with the highest historical activation frequency; the daily
    slot at the weekday's most frequent activation hour.
    """
    if not 0 <= tau <= 24:
        raise ValidationError("tau must be in 0..24")
    offers = []
    for slot, _prob in predictions:
        if resolution == "hourly":
            anchor = slot
        elif resolution == "group":
            if anchors is None or group_spec is None:
                raise ValidationError("group offers need anchors and a group spec")
            anchor = anchors.group_anchor(group_spec.groups[slot])
        elif resolution == "daily":
            if anchors is None:
                raise ValidationError("daily offers need an anchor model")
            anchor = anchors.daily_anchor(weekday)
        else:
            raise ValidationError(f"unknown resolution {resolution!r}")
        offers.append(
            FlexOffer(
                earliest_start=anchor,
                latest_start=anchor + tau,
                profile=profiles[slot],
                origin=(day, slot, resolution),
            )
        )
    offers.sort(key=lambda o: (o.earliest_start, o.origin))
    return offers
