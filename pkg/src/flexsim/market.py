"""Regulating-market arithmetic: the volume-dependent price model, regulation
cost, expected cost after shifting, forecast-error loss, and savings.

Signed imbalance m(t) = v_u(t) - |v_d(t)| carries both regulation volumes in
one number: positive means up-regulation is needed, negative means down.
All volumes and demands are MWh; device kWh is converted upstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ScheduleRegressionError, ValidationError
from .ingest import MarketSeries

PRICE_MODES = ("observed", "modeled")
LOSS_MODES = ("literal", "marginal")

KWH_TO_MWH = 1e-3

# Coefficients of the volume/price relationship: down-regulation lowers the
# price from spot, up-regulation raises it, both proportionally to volume.
DOWN_BASE = -0.334
DOWN_SLOPE = 0.0005
UP_BASE = 0.238
UP_SLOPE = 0.0034


@dataclass(frozen=True)
class MarketSlice:
    """A contiguous k-hour window of market data used for one scheduling run."""

    spot: np.ndarray
    m: np.ndarray  # signed imbalance per hour
    p_up_obs: Optional[np.ndarray] = None
    p_down_obs: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.spot) != len(self.m):
            raise ValidationError("spot and imbalance lengths differ")

    def __len__(self) -> int:
        return len(self.spot)

    @classmethod
    def from_series(cls, series: MarketSeries, start_index: int, k: int) -> "MarketSlice":
        if start_index < 0 or start_index + k > len(series):
            raise ValidationError("market slice out of range")
        sl = slice(start_index, start_index + k)
        return cls(
            spot=series.spot[sl].copy(),
            m=series.imbalance[sl].copy(),
            p_up_obs=series.p_up[sl].copy(),
            p_down_obs=series.p_down[sl].copy(),
        )


@dataclass(frozen=True)
class CostReport:
    R: float
    E: float
    delta_R: float
    L: float
    net: float
    hourly_cost: np.ndarray = field(default=None, repr=False)
    hourly_expected: np.ndarray = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "R": self.R,
            "E": self.E,
            "delta_R": self.delta_R,
            "L": self.L,
            "net": self.net,
        }


def regulation_price(p_s: float, v_u: float = 0.0, v_d: float = 0.0) -> float:
    """Regulation price as a function of spot price and the active volume.

    With no regulation the price equals spot.  Only one direction may be
    active: v_u > 0 raises the price, v_d < 0 lowers it.
    """
    if v_u > 0 and v_d < 0:
        raise ValidationError("both regulation directions active")
    p = p_s
    if v_d < 0:
        p += DOWN_BASE * p_s + DOWN_SLOPE * p_s * v_d
    if v_u > 0:
        p += UP_BASE * p_s + UP_SLOPE * p_s * v_u
    return p


def _modeled_price(p_s: float, m: float) -> float:
    if m > 0:
        return regulation_price(p_s, v_u=m)
    if m < 0:
        return regulation_price(p_s, v_d=m)
    return p_s


def _spread(v: MarketSlice, i: int, m_value: float, price_mode: str) -> float:
    """|p_u/d - p_s| at hour i for imbalance m_value.

    Observed mode reads the price column for the active direction; modeled
    mode recomputes the price from the volume.
    """
    if m_value == 0.0:
        return 0.0
    if price_mode == "modeled":
        return abs(_modeled_price(v.spot[i], m_value) - v.spot[i])
    if price_mode == "observed":
        if v.p_up_obs is None or v.p_down_obs is None:
            raise ValidationError("observed prices unavailable in this slice")
        price = v.p_up_obs[i] if m_value > 0 else v.p_down_obs[i]
        return abs(price - v.spot[i])
    raise ValidationError(f"unknown price mode {price_mode!r}")


def hourly_costs(v: MarketSlice, m: np.ndarray, price_mode: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    spot = v.spot
    if price_mode == "modeled":
        spread = np.where(
            m > 0,
            np.abs(UP_BASE * spot + UP_SLOPE * spot * m),
            np.where(m < 0, np.abs(DOWN_BASE * spot + DOWN_SLOPE * spot * m), 0.0),
        )
    elif price_mode == "observed":
        if v.p_up_obs is None or v.p_down_obs is None:
            raise ValidationError("observed prices unavailable in this slice")
        spread = np.where(
            m > 0,
            np.abs(v.p_up_obs - spot),
            np.where(m < 0, np.abs(v.p_down_obs - spot), 0.0),
        )
    else:
        raise ValidationError(f"unknown price mode {price_mode!r}")
    return np.abs(m) * spread


def regulation_cost(v: MarketSlice, price_mode: str = "observed") -> float:
    """Total cost of the market's regulation over the slice: volume times
    the regulation/spot price spread, per hour."""
    return float(hourly_costs(v, v.m, price_mode).sum())


def apply_shift(m: np.ndarray, from_hour: int, to_hour: int, energy: float) -> np.ndarray:
    """Move `energy` MWh of planned demand from one hour to another.

    Removing demand at its forecast hour creates surplus there (m drops);
    adding it elsewhere creates shortage there (m rises).
    """
    if energy < 0:
        raise ValidationError("shift energy must be >= 0")
    if not (0 <= from_hour < len(m) and 0 <= to_hour < len(m)):
        raise ValidationError("shift hours outside the horizon")
    out = m.copy()
    out[from_hour] -= energy
    out[to_hour] += energy
    return out


def expected_cost(v: MarketSlice, m_bar: np.ndarray, price_mode: str = "observed") -> float:
    """Regulation cost of the post-schedule imbalance m_bar.

    In modeled mode the prices are recomputed from the updated volumes; in
    observed mode the recorded prices stay fixed.
    """
    if len(m_bar) != len(v):
        raise ValidationError("imbalance length does not match slice")
    return float(hourly_costs(v, np.asarray(m_bar, dtype=float), price_mode).sum())


def forecast_loss(
    actual: np.ndarray,
    forecast: np.ndarray,
    v: MarketSlice,
    price_mode: str = "observed",
    loss_mode: str = "literal",
) -> float:
    return float(hourly_forecast_loss(actual, forecast, v, price_mode, loss_mode).sum())


def hourly_forecast_loss(
    actual: np.ndarray,
    forecast: np.ndarray,
    v: MarketSlice,
    price_mode: str = "observed",
    loss_mode: str = "literal",
) -> np.ndarray:
    """Per-hour financial loss from forecast errors.

    Each hour pays the demand deviation times the regulation/spot spread,
    plus -- whenever actual and forecast differ -- the regulation volume
    times a price term computed at the deviation-updated volume
    m_bar = m + (actual - forecast).  In literal mode that term uses the
    updated price against spot; in marginal mode only the price change.
    The updated price always comes from the volume/price model, since no
    observed price exists for a hypothetical volume.
    """
    actual = np.asarray(actual, dtype=float)
    forecast = np.asarray(forecast, dtype=float)
    if actual.shape != forecast.shape or len(actual) != len(v):
        raise ValidationError("demand vectors must match the slice length")
    if loss_mode not in LOSS_MODES:
        raise ValidationError(f"unknown loss mode {loss_mode!r}")
    out = np.zeros(len(v))
    for i in range(len(v)):
        dev = abs(actual[i] - forecast[i])
        if dev == 0.0:
            continue
        out[i] = dev * _spread(v, i, v.m[i], price_mode)
        volume = abs(v.m[i])
        if volume > 0.0:
            m_new = v.m[i] + (actual[i] - forecast[i])
            p_new = _modeled_price(v.spot[i], m_new)
            if loss_mode == "literal":
                out[i] += volume * abs(p_new - v.spot[i])
            else:
                p_old = _modeled_price(v.spot[i], v.m[i])
                out[i] += volume * abs(p_new - p_old)
    return out


def savings(
    v: MarketSlice,
    m_bar: np.ndarray,
    loss: float,
    price_mode: str = "observed",
) -> CostReport:
    """Assemble the cost report: R on the original imbalance, E on the
    scheduled one, delta, loss, and net = delta - loss."""
    base = hourly_costs(v, v.m, price_mode)
    expected = hourly_costs(v, np.asarray(m_bar, dtype=float), price_mode)
    r = float(base.sum())
    e = float(expected.sum())
    if e > r + 1e-9 * max(1.0, abs(r)):
        raise ScheduleRegressionError(
            f"expected cost {e} exceeds baseline {r}; the no-op schedule was feasible"
        )
    delta = r - e
    return CostReport(
        R=r,
        E=e,
        delta_R=delta,
        L=loss,
        net=delta - loss,
        hourly_cost=base,
        hourly_expected=expected,
    )
