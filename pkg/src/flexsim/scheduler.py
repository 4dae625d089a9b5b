"""Assignment of flex-offers to start hours within their windows.

The exact solver enumerates joint assignments depth-first with incremental
objective updates and an admissible pruning bound; the greedy fallback
places offers one at a time.  Both maximize the total reduction in
regulation volume by default; a cost mode re-scores assignments by the
regulation-cost delta instead.

The strict flag keeps the literal placement rule: a shifted hour must have
more down-regulation available than the energy placed into it, judged
against the pre-schedule imbalance.  The no-op start (keeping the anchor)
is always allowed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceededError, ValidationError
from .flexoffer import FlexOffer
from .market import MarketSlice, _spread

EXACT_BUDGET = 10**6


@dataclass(frozen=True)
class Schedule:
    """starts[i] is the assigned start hour of offers[i]; objective is the
    regulation-volume reduction sum(|m|) - sum(|m_bar|)."""

    starts: tuple[int, ...]
    m_bar: np.ndarray
    objective: float
    cost_delta: Optional[float] = None

    def to_json(self, offers: Sequence[FlexOffer]) -> dict:
        return {
            "assignments": [
                {"offer": o.to_json(), "start_hour": s} for o, s in zip(offers, self.starts)
            ],
            "objective_mwh": self.objective,
            "cost_delta": self.cost_delta,
        }


def _feasible_starts(offer: FlexOffer, k: int, m_base: np.ndarray, strict: bool) -> list[int]:
    anchor = offer.earliest_start
    if anchor >= k:
        raise ValidationError("offer anchored outside the horizon")
    starts = [anchor]
    units = offer.profile.units
    l = len(units)
    if anchor + l - 1 > k - 1:
        # Profile spills past the horizon at its anchor; only the no-op is
        # representable, since a shift would move unmodeled energy inside.
        return starts
    for s in range(anchor + 1, offer.latest_start + 1):
        if s + l - 1 > k - 1:
            break
        if strict:
            ok = all(
                m_base[s + j] < 0 and -m_base[s + j] > units[j]
                for j in range(l)
                if units[j] > 0
            )
            if not ok:
                continue
        starts.append(s)
    return starts


class _State:
    """Mutable horizon state with O(touched hours) apply/undo."""

    def __init__(self, m: np.ndarray, cost_fn=None):
        self.m = m.astype(float).copy()
        self.volume = float(np.abs(self.m).sum())
        self.cost_fn = cost_fn
        self.cost = (
            float(sum(cost_fn(i, self.m[i]) for i in range(len(self.m))))
            if cost_fn
            else 0.0
        )

    def _bump(self, hour: int, delta: float):
        old = self.m[hour]
        new = old + delta
        self.volume += abs(new) - abs(old)
        if self.cost_fn:
            self.cost += self.cost_fn(hour, new) - self.cost_fn(hour, old)
        self.m[hour] = new

    def place(self, offer: FlexOffer, start: int):
        anchor = offer.earliest_start
        if start == anchor:
            return
        for j, e in enumerate(offer.profile.units):
            if e > 0:
                self._bump(anchor + j, -e)
                self._bump(start + j, e)

    def unplace(self, offer: FlexOffer, start: int):
        anchor = offer.earliest_start
        if start == anchor:
            return
        for j, e in enumerate(offer.profile.units):
            if e > 0:
                self._bump(anchor + j, e)
                self._bump(start + j, -e)


def _cost_fn(market_slice: MarketSlice, price_mode: str):
    def cost(i: int, value: float) -> float:
        return abs(value) * _spread(market_slice, i, value, price_mode)

    return cost


def schedule_exact(
    offers: Sequence[FlexOffer],
    m: np.ndarray,
    strict: bool = True,
    objective: str = "volume",
    market_slice: Optional[MarketSlice] = None,
    price_mode: str = "observed",
    budget: int = EXACT_BUDGET,
) -> Schedule:
    """Optimal joint assignment by depth-first enumeration.

    Ties break toward the earliest start, then offer order.  Raises
    BudgetExceededError (use schedule_greedy) when the product of window
    sizes exceeds the budget.
    """
    m = np.asarray(m, dtype=float)
    k = len(m)
    if objective not in ("volume", "cost"):
        raise ValidationError(f"unknown objective {objective!r}")
    if objective == "cost" and market_slice is None:
        raise ValidationError("cost objective requires a market slice")
    candidates = [_feasible_starts(o, k, m, strict) for o in offers]
    leaves = 1
    for c in candidates:
        leaves *= len(c)
        if leaves > budget:
            raise BudgetExceededError(
                f"{leaves}+ assignments exceed the exact budget of {budget}; "
                "use schedule_greedy for this instance"
            )
    cost_fn = _cost_fn(market_slice, price_mode) if objective == "cost" else None
    state = _State(m, cost_fn)
    base_volume = state.volume
    base_cost = state.cost
    n = len(offers)
    remaining_energy = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        remaining_energy[i] = remaining_energy[i + 1] + offers[i].total_energy

    best_score = -np.inf
    best_starts: list[int] = [c[0] for c in candidates]
    current: list[int] = [0] * n

    def score() -> float:
        if objective == "volume":
            return base_volume - state.volume
        return base_cost - state.cost

    def recurse(i: int):
        nonlocal best_score, best_starts
        if i == n:
            s = score()
            if s > best_score:
                best_score = s
                best_starts = current.copy()
            return
        if objective == "volume":
            bound = (base_volume - state.volume) + min(
                2.0 * remaining_energy[i], state.volume
            )
            if bound <= best_score:
                return
        for s in candidates[i]:
            state.place(offers[i], s)
            current[i] = s
            recurse(i + 1)
            state.unplace(offers[i], s)

    recurse(0)

    final = _State(m)
    for o, s in zip(offers, best_starts):
        final.place(o, s)
    cost_delta = None
    if market_slice is not None:
        fn = _cost_fn(market_slice, price_mode)
        base = sum(fn(i, m[i]) for i in range(k))
        after = sum(fn(i, final.m[i]) for i in range(k))
        cost_delta = float(base - after)
    return Schedule(
        starts=tuple(best_starts),
        m_bar=final.m,
        objective=base_volume - final.volume,
        cost_delta=cost_delta,
    )


def schedule_greedy(
    offers: Sequence[FlexOffer],
    m: np.ndarray,
    strict: bool = True,
    objective: str = "volume",
    market_slice: Optional[MarketSlice] = None,
    price_mode: str = "observed",
) -> Schedule:
    """Place offers one at a time, largest total energy first, each at the
    start with the best marginal improvement on the current state.  Never
    worse than leaving everything at its anchor."""
    m = np.asarray(m, dtype=float)
    k = len(m)
    candidates = [_feasible_starts(o, k, m, strict) for o in offers]
    cost_fn = _cost_fn(market_slice, price_mode) if objective == "cost" else None
    if objective == "cost" and market_slice is None:
        raise ValidationError("cost objective requires a market slice")
    state = _State(m, cost_fn)
    base_volume = state.volume
    base_cost = state.cost
    order = sorted(range(len(offers)), key=lambda i: (-offers[i].total_energy, i))
    starts = [c[0] for c in candidates]
    for i in order:
        best_s = candidates[i][0]
        best_gain = 0.0
        before_vol, before_cost = state.volume, state.cost
        for s in candidates[i]:
            state.place(offers[i], s)
            gain = (before_vol - state.volume) if objective == "volume" else (before_cost - state.cost)
            state.unplace(offers[i], s)
            if gain > best_gain:
                best_gain = gain
                best_s = s
        state.place(offers[i], best_s)
        starts[i] = best_s
    cost_delta = None
    if market_slice is not None:
        fn = _cost_fn(market_slice, price_mode)
        base = sum(fn(i, m[i]) for i in range(k))
        after = sum(fn(i, state.m[i]) for i in range(k))
        cost_delta = float(base - after)
    return Schedule(
        starts=tuple(starts),
        m_bar=state.m,
        objective=base_volume - state.volume,
        cost_delta=cost_delta,
    )


def schedule_auto(
    offers: Sequence[FlexOffer],
    m: np.ndarray,
    strict: bool = True,
    objective: str = "volume",
    market_slice: Optional[MarketSlice] = None,
    price_mode: str = "observed",
    budget: int = EXACT_BUDGET,
) -> Schedule:
    """Exact when the instance fits the budget, greedy otherwise."""
    try:
        return schedule_exact(
            offers, m, strict, objective, market_slice, price_mode, budget
        )
    except BudgetExceededError:
        return schedule_greedy(offers, m, strict, objective, market_slice, price_mode)


def optimal_baseline(
    perfect_offers: Sequence[FlexOffer],
    m: np.ndarray,
    strict: bool = True,
    objective: str = "volume",
    market_slice: Optional[MarketSlice] = None,
    price_mode: str = "observed",
    budget: int = EXACT_BUDGET,
) -> Schedule:
    """Exact schedule of perfect-forecast offers (actual activation times
    and profiles); its cost saving is the percent-of-optimal denominator."""
    return schedule_auto(
        perfect_offers, m, strict, objective, market_slice, price_mode, budget
    )
