"""Seeded synthetic device-usage and market series.

Generators draw from an explicit numpy Generator seeded with a 64-bit
value and never touch ambient randomness, so identical seeds reproduce
identical series on any platform.  Written CSVs use the exact schemas the
ingest module accepts.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Optional

import numpy as np

from .errors import ValidationError
from .ingest import QUARTERS_PER_DAY, MarketSeries, ReadingSeries
from .market import regulation_price


@dataclass(frozen=True)
class UsagePattern:
    """Weekly activation structure for one device.

    hour_prob[dow, hour] is the chance the device switches on in that hour;
    noise blends it toward the table's flat mean (noise 1 = no pattern
    left).  durations is a discrete distribution over run length in
    15-minute units; unit energies are normal around energy_mean_kwh.
    """

    hour_prob: np.ndarray
    durations: tuple[tuple[int, float], ...] = ((1, 0.25), (2, 0.25), (3, 0.25), (4, 0.25))
    energy_mean_kwh: float = 0.4
    energy_spread_kwh: float = 0.08
    noise: float = 0.0
    min_unit_kwh: float = 0.05

    def __post_init__(self):
        if self.hour_prob.shape != (7, 24):
            raise ValidationError("hour_prob must have shape (7, 24)")
        if ((self.hour_prob < 0) | (self.hour_prob > 1)).any():
            raise ValidationError("activation probabilities must be in [0, 1]")
        if not self.durations or any(d < 1 for d, _ in self.durations):
            raise ValidationError("duration support must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise ValidationError("noise must be in [0, 1]")

    @classmethod
    def weekly(
        cls,
        weekday_hours: dict[int, float],
        weekend_hours: Optional[dict[int, float]] = None,
        **kwargs,
    ) -> "UsagePattern":
        """Table from {hour: probability} maps for weekdays and weekends."""
        table = np.zeros((7, 24))
        weekend = weekday_hours if weekend_hours is None else weekend_hours
        for dow in range(7):
            source = weekday_hours if dow < 5 else weekend
            for hour, p in source.items():
                table[dow, hour] = p
        return cls(hour_prob=table, **kwargs)


def gen_device(
    pattern: UsagePattern,
    days: int,
    seed: int,
    start_date: date = date(2016, 1, 4),
    gap_rate: float = 0.0,
    device_id: str = "synth-device",
) -> ReadingSeries:
    """Render seeded activations as 15-minute watt readings.

    Each activating hour gets a run at a random quarter, with duration and
    unit energies drawn from the pattern; a run is dropped when it would
    touch an already-active quarter (the device is busy).  gap_rate
    optionally marks random quarters as observation gaps.
    """
    if days < 14:
        raise ValidationError("need at least 14 days of synthetic data")
    rng = np.random.default_rng(seed)
    n = days * QUARTERS_PER_DAY
    values = np.zeros(n)
    flat = float(pattern.hour_prob.mean())
    for day in range(days):
        dow = (start_date + timedelta(days=day)).weekday()
        for hour in range(24):
            p = (1.0 - pattern.noise) * pattern.hour_prob[dow, hour] + pattern.noise * flat
            if rng.random() >= p:
                continue
            offset = int(rng.integers(0, 4))
            lengths, probs = zip(*pattern.durations)
            duration = int(rng.choice(lengths, p=np.asarray(probs) / sum(probs)))
            energies = rng.normal(pattern.energy_mean_kwh, pattern.energy_spread_kwh, duration)
            energies = np.clip(energies, pattern.min_unit_kwh, None)
            start = day * QUARTERS_PER_DAY + hour * 4 + offset
            end = min(start + duration, n)
            # Busy device: require the run's quarters and the one before idle.
            if values[max(start - 1, 0) : end].any():
                continue
            values[start:end] = energies[: end - start] * 4000.0  # kWh/15min -> W
    missing = np.zeros(n, dtype=bool)
    if gap_rate > 0:
        missing = rng.random(n) < gap_rate
        values[missing] = 0.0
    return ReadingSeries(
        device_id=device_id,
        start=datetime.combine(start_date, datetime.min.time()),
        values=values,
        missing=missing,
    )


def gen_market(
    days: int,
    seed: int,
    spot_level: float = 100.0,
    imbalance_scale: float = 1.0,
    start_date: date = date(2016, 1, 4),
    balanced_fraction: float = 0.25,
    price_style: str = "modeled",
) -> MarketSeries:
    """Hourly market series with exclusive up/down volumes.

    Imbalance follows a seeded AR(1) around zero at the given scale, with a
    share of hours exactly balanced.  In the modeled price style the price
    columns equal the volume/price model outputs exactly, so observed and
    modeled costing coincide; the perturbed style adds noise to the spreads.
    """
    if days < 1:
        raise ValidationError("days must be >= 1")
    if price_style not in ("modeled", "perturbed"):
        raise ValidationError(f"unknown price style {price_style!r}")
    rng = np.random.default_rng(seed)
    hours = days * 24
    hour_of_day = np.arange(hours) % 24
    spot = spot_level * (
        1.0 + 0.15 * np.sin(2 * np.pi * (hour_of_day - 6) / 24.0) + 0.03 * rng.standard_normal(hours)
    )
    spot = np.maximum(spot, 0.1 * spot_level)
    m = np.zeros(hours)
    level = 0.0
    for i in range(hours):
        level = 0.6 * level + 0.8 * imbalance_scale * rng.standard_normal()
        m[i] = level
    balanced = rng.random(hours) < balanced_fraction
    m[balanced] = 0.0
    v_up = np.maximum(m, 0.0)
    v_down = np.minimum(m, 0.0)
    p_up = np.array([regulation_price(spot[i], v_u=v_up[i]) for i in range(hours)])
    p_down = np.array([regulation_price(spot[i], v_d=v_down[i]) for i in range(hours)])
    if price_style == "perturbed":
        wiggle_u = 1.0 + 0.1 * rng.standard_normal(hours)
        wiggle_d = 1.0 + 0.1 * rng.standard_normal(hours)
        p_up = spot + (p_up - spot) * wiggle_u
        p_down = spot + (p_down - spot) * wiggle_d
    return MarketSeries(
        start=datetime.combine(start_date, datetime.min.time()),
        spot=spot,
        v_up=v_up,
        v_down=v_down,
        p_up=p_up,
        p_down=p_down,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_readings_csv(path: str, series: ReadingSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "device_id", "watts"])
        for i in range(len(series)):
            ts = series.timestamp(i).isoformat(sep=" ")
            watts = "" if series.missing[i] else _fmt(series.values[i])
            writer.writerow([ts, series.device_id, watts])


def write_market_csv(path: str, market: MarketSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "Date",
                "Hour",
                "Up-regulation Volume",
                "Down-regulation Volume",
                "Up-regulation Price",
                "Down-Regulation price",
                "spot price",
            ]
        )
        for i in range(len(market)):
            when = market.start + timedelta(hours=i)
            writer.writerow(
                [
                    when.date().isoformat(),
                    when.hour,
                    _fmt(market.v_up[i]),
                    _fmt(market.v_down[i]),
                    _fmt(market.p_up[i]),
                    _fmt(market.p_down[i]),
                    _fmt(market.spot[i]),
                ]
            )
