"""Forecast evaluation: confusion categories, precision-recall curves and
AUC, F1 sweeps, and the savings-versus-threshold analysis that prices
forecast quality on the regulating market.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, DegenerateDataError, ValidationError
from .flexoffer import AnchorModel, FlexOffer, assemble
from .ingest import GroupSpec, MarketSeries
from .market import (
    MarketSlice,
    hourly_costs,
    hourly_forecast_loss,
)
from .profiles import EnergyProfile
from .scheduler import Schedule, schedule_auto

REPORT_COLUMNS = (
    "threshold",
    "precision",
    "recall",
    "f1",
    "delta_r",
    "loss",
    "net",
    "pct_optimal",
    "tp_gain",
    "fp_loss",
    "fn_loss",
)


@dataclass(frozen=True)
class ConfusionBreakdown:
    tp: int
    fp: int
    fn: int
    tn: int
    categories: tuple[str, ...]

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


def confusion(actual: Sequence[float], predicted: Sequence[float]) -> ConfusionBreakdown:
    """Classify each aligned slot by the signs of actual and forecast demand."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValidationError("actual and predicted lengths differ")
    cats = []
    counts = {"TP": 0, "FP": 0, "FN": 0, "TN": 0}
    for a, p in zip(actual, predicted):
        if a > 0 and p > 0:
            cat = "TP"
        elif a > 0:
            cat = "FN"
        elif p > 0:
            cat = "FP"
        else:
            cat = "TN"
        counts[cat] += 1
        cats.append(cat)
    return ConfusionBreakdown(
        tp=counts["TP"], fp=counts["FP"], fn=counts["FN"], tn=counts["TN"], categories=tuple(cats)
    )


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall at every distinct-score threshold, high to low."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float


def _sweep_counts(scores: np.ndarray, labels: np.ndarray):
    """Cumulative TP/FP at each distinct score, descending."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    total_pos = int(np.sum(labels == 1))
    if total_pos == 0:
        raise DegenerateDataError("PR analysis requires at least one positive label")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order]
    tp_cum = np.cumsum(y_sorted == 1)
    fp_cum = np.cumsum(y_sorted == 0)
    # Last index of each tie group = counts at threshold "score >= s".
    is_last = np.append(s_sorted[1:] != s_sorted[:-1], True)
    idx = np.flatnonzero(is_last)
    return s_sorted[idx], tp_cum[idx], fp_cum[idx], total_pos


def pr_curve(scores: Sequence[float], labels: Sequence[int]) -> PRCurve:
    """PR points over the distinct-score sweep with trapezoidal AUC.

    The area is taken over achievable points only: the curve is anchored at
    (recall 0, first precision) and never interpolated beyond the recall
    values the score ordering can reach.
    """
    thresholds, tp, fp, total_pos = _sweep_counts(np.asarray(scores), np.asarray(labels))
    precision = tp / (tp + fp)
    recall = tp / total_pos
    r = np.concatenate(([0.0], recall))
    p = np.concatenate(([precision[0]], precision))
    auc = float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))
    return PRCurve(thresholds=thresholds, precision=precision, recall=recall, auc=auc)


def f1_sweep(scores: Sequence[float], labels: Sequence[int]) -> list[dict]:
    """One row (threshold, precision, recall, f1) per distinct score."""
    thresholds, tp, fp, total_pos = _sweep_counts(np.asarray(scores), np.asarray(labels))
    rows = []
    for t, tpc, fpc in zip(thresholds, tp, fp):
        prec = tpc / (tpc + fpc)
        rec = tpc / total_pos
        f1 = 2 * prec * rec / (prec + rec) if (prec + rec) else 0.0
        rows.append(
            {"threshold": float(t), "precision": float(prec), "recall": float(rec), "f1": float(f1)}
        )
    return rows


@dataclass(frozen=True)
class DayCase:
    """One evaluation day: model scores, actual slot labels, and the actual
    operations (start hour, hourly MWh units) observed that day."""

    day: int
    weekday: int
    market_index: int
    scores: np.ndarray
    labels: np.ndarray
    actual_runs: tuple[tuple[int, np.ndarray], ...]


@dataclass(frozen=True)
class EvaluationContext:
    market: MarketSeries
    days: tuple[DayCase, ...]
    profiles: dict[int, EnergyProfile]  # per slot, hourly MWh units
    tau: int
    resolution: str
    anchors: Optional[AnchorModel] = None
    group_spec: Optional[GroupSpec] = None
    profiles_by_weekday: Optional[dict[int, EnergyProfile]] = None  # daily resolution
    strict: bool = True
    price_mode: str = "observed"
    loss_mode: str = "literal"
    objective: str = "volume"
    budget: int = 10**6

    @property
    def horizon(self) -> int:
        return 24 + self.tau

    def profiles_for(self, case: DayCase) -> dict[int, EnergyProfile]:
        if self.resolution == "daily" and self.profiles_by_weekday is not None:
            return {0: self.profiles_by_weekday[case.weekday]}
        return self.profiles


def _slice_for(ctx: EvaluationContext, case: DayCase) -> MarketSlice:
    k = ctx.horizon
    if case.market_index < 0 or case.market_index + k > len(ctx.market):
        raise CoverageError(
            f"market series does not cover {k} hours from day index {case.day}"
        )
    return MarketSlice.from_series(ctx.market, case.market_index, k)


def perfect_offers(ctx: EvaluationContext, case: DayCase) -> list[FlexOffer]:
    """Offers built from the day's actual operations (a 100%-accurate forecast)."""
    offers = [
        FlexOffer(
            earliest_start=hour,
            latest_start=hour + ctx.tau,
            profile=EnergyProfile(units=np.asarray(units, dtype=float)),
            origin=(case.day, hour, "actual"),
        )
        for hour, units in case.actual_runs
    ]
    offers.sort(key=lambda o: (o.earliest_start, o.origin))
    return offers


def _schedule_with_noop_guard(
    ctx: EvaluationContext, offers: Sequence[FlexOffer], sl: MarketSlice
) -> tuple[Schedule, np.ndarray]:
    """Schedule offers; if the volume-optimal plan costs more than doing
    nothing (possible when hourly spreads differ), keep the no-op."""
    schedule = schedule_auto(
        offers,
        sl.m,
        strict=ctx.strict,
        objective=ctx.objective,
        market_slice=sl,
        price_mode=ctx.price_mode,
        budget=ctx.budget,
    )
    base = hourly_costs(sl, sl.m, ctx.price_mode).sum()
    after = hourly_costs(sl, schedule.m_bar, ctx.price_mode).sum()
    if after > base:
        noop = Schedule(
            starts=tuple(o.earliest_start for o in offers),
            m_bar=sl.m.copy(),
            objective=0.0,
            cost_delta=0.0,
        )
        return noop, sl.m.copy()
    return schedule, schedule.m_bar


@dataclass(frozen=True)
class DayOutcome:
    delta_r: float
    loss: float
    net: float
    tp_gain: float
    fp_loss: float
    fn_loss: float
    schedule: Schedule = field(repr=False, default=None)
    offers: tuple[FlexOffer, ...] = field(repr=False, default=())


def evaluate_day(ctx: EvaluationContext, case: DayCase, threshold: float) -> DayOutcome:
    """Price one day's forecast at a decision threshold.

    Predicted slots become offers and are scheduled; correctly predicted
    operations execute at their scheduled start, missed ones at their
    natural time, phantom ones never.  The cost delta and the deviation
    loss are then split over the confusion categories: per-offer marginal
    gains by re-scoring the schedule without the offer, per-hour losses by
    the signs of actual and scheduled demand.
    """
    sl = _slice_for(ctx, case)
    k = ctx.horizon
    predictions = [
        (slot, float(case.scores[slot]))
        for slot in range(len(case.scores))
        if case.scores[slot] >= threshold
    ]
    offers = assemble(
        predictions,
        ctx.profiles_for(case),
        ctx.tau,
        ctx.resolution,
        case.weekday,
        anchors=ctx.anchors,
        group_spec=ctx.group_spec,
        day=case.day,
    )
    schedule, m_bar = _schedule_with_noop_guard(ctx, offers, sl)

    base_costs = hourly_costs(sl, sl.m, ctx.price_mode)
    after_costs = hourly_costs(sl, m_bar, ctx.price_mode)
    delta_r = float(base_costs.sum() - after_costs.sum())

    forecast = np.zeros(k)
    for offer, start in zip(offers, schedule.starts):
        for j, e in enumerate(offer.profile.units):
            if start + j < k:
                forecast[start + j] += e

    # Delivered demand: each actual run follows its offer's schedule when one
    # matched its slot (first match wins); unmatched runs stay where they were.
    delivered = np.zeros(k)
    matched_offsets = {}
    for offer, start in zip(offers, schedule.starts):
        _, slot, _ = offer.origin
        if case.labels[slot] > 0 and slot not in matched_offsets:
            matched_offsets[slot] = start
    used = set()
    for hour, units in case.actual_runs:
        slot = _slot_of_hour(ctx, hour)
        if slot in matched_offsets and slot not in used:
            start = matched_offsets[slot]
            used.add(slot)
        else:
            start = hour
        for j, e in enumerate(units):
            if start + j < k:
                delivered[start + j] += e

    hour_losses = hourly_forecast_loss(
        delivered, forecast, sl, ctx.price_mode, ctx.loss_mode
    )
    loss = float(hour_losses.sum())

    tp_hours = (delivered > 0) & (forecast > 0)
    fp_hours = (delivered == 0) & (forecast > 0)
    fn_hours = (delivered > 0) & (forecast == 0)

    gains = _marginal_gains(ctx, sl, offers, schedule, m_bar)
    tp_gain = 0.0
    fp_gain = 0.0
    for offer, gain in zip(offers, gains):
        _, slot, _ = offer.origin
        if case.labels[slot] > 0:
            tp_gain += gain
        else:
            fp_gain += gain

    outcome = DayOutcome(
        delta_r=delta_r,
        loss=loss,
        net=delta_r - loss,
        tp_gain=tp_gain - float(hour_losses[tp_hours].sum()),
        fp_loss=float(hour_losses[fp_hours].sum()) - fp_gain,
        fn_loss=float(hour_losses[fn_hours].sum()),
        schedule=schedule,
        offers=tuple(offers),
    )
    return outcome


def _slot_of_hour(ctx: EvaluationContext, hour: int) -> int:
    if ctx.resolution == "hourly":
        return hour
    if ctx.resolution == "group":
        return ctx.group_spec.group_of(hour)
    return 0


def _marginal_gains(
    ctx: EvaluationContext,
    sl: MarketSlice,
    offers: Sequence[FlexOffer],
    schedule: Schedule,
    m_bar: np.ndarray,
) -> list[float]:
    """Cost reduction attributable to each offer: re-score the schedule with
    that offer's shifts undone, others fixed."""
    cost_with = hourly_costs(sl, m_bar, ctx.price_mode).sum()
    gains = []
    for offer, start in zip(offers, schedule.starts):
        m_without = m_bar.copy()
        if start != offer.earliest_start:
            for j, e in enumerate(offer.profile.units):
                if e > 0:
                    m_without[offer.earliest_start + j] += e
                    m_without[start + j] -= e
        cost_without = hourly_costs(sl, m_without, ctx.price_mode).sum()
        gains.append(float(cost_without - cost_with))
    return gains


def optimal_delta(ctx: EvaluationContext, case: DayCase) -> float:
    """Cost saving of the exact schedule of the day's actual operations."""
    sl = _slice_for(ctx, case)
    offers = perfect_offers(ctx, case)
    _, m_bar = _schedule_with_noop_guard(ctx, offers, sl)
    base = hourly_costs(sl, sl.m, ctx.price_mode).sum()
    after = hourly_costs(sl, m_bar, ctx.price_mode).sum()
    return float(base - after)


def savings_sweep(ctx: EvaluationContext, thresholds: Sequence[float]) -> list[dict]:
    """One report row per threshold: forecast quality and priced outcome.

    pct_optimal is net savings over the perfect-forecast saving, or None
    when the latter is zero.
    """
    all_scores = np.concatenate([case.scores for case in ctx.days])
    all_labels = np.concatenate([case.labels for case in ctx.days])
    optimal_total = sum(optimal_delta(ctx, case) for case in ctx.days)
    rows = []
    for t in thresholds:
        agg = {"delta_r": 0.0, "loss": 0.0, "net": 0.0, "tp_gain": 0.0, "fp_loss": 0.0, "fn_loss": 0.0}
        for case in ctx.days:
            outcome = evaluate_day(ctx, case, t)
            agg["delta_r"] += outcome.delta_r
            agg["loss"] += outcome.loss
            agg["net"] += outcome.net
            agg["tp_gain"] += outcome.tp_gain
            agg["fp_loss"] += outcome.fp_loss
            agg["fn_loss"] += outcome.fn_loss
        cb = confusion(all_labels, (all_scores >= t).astype(float))
        rows.append(
            {
                "threshold": float(t),
                "precision": cb.precision,
                "recall": cb.recall,
                "f1": cb.f1,
                "delta_r": agg["delta_r"],
                "loss": agg["loss"],
                "net": agg["net"],
                "pct_optimal": (agg["net"] / optimal_total) if optimal_total > 0 else None,
                "tp_gain": agg["tp_gain"],
                "fp_loss": agg["fp_loss"],
                "fn_loss": agg["fn_loss"],
            }
        )
    return rows
