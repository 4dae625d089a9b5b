"""End-to-end experiment stages: synth -> ingest -> train -> forecast ->
schedule -> evaluate -> report.

Each stage reads and writes JSON/CSV artifacts under the configured output
directory, so stages are independently re-runnable; artifacts embed input
hashes and a stage refuses to run on stale upstream data.  All device
energies are converted from kWh to MWh before touching market arithmetic.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from datetime import date, datetime, timedelta

import numpy as np

from . import classifier, evaluate, profiles
from .artifacts import read_artifact, write_artifact
from .config import ExperimentConfig
from .errors import ConfigError, CoverageError
from .features import WARMUP_DAYS, FeatureLayout, build_matrix
from .flexoffer import AnchorModel
from .ingest import (
    QUARTERS_PER_DAY,
    ActivationSeries,
    GroupSpec,
    MarketSeries,
    ReadingSeries,
    _day_grid,
    derive_groups,
    load_market,
    load_readings,
    to_daily,
    to_group,
    to_hourly,
)
from .market import KWH_TO_MWH
from .profiles import EnergyProfile, to_hourly_units
from .synth import UsagePattern, gen_device, gen_market, write_market_csv, write_readings_csv

ARTIFACTS = {
    "ingest": "activations.json",
    "train": "model.json",
    "forecast": "scores.json",
    "schedule": "schedule.json",
    "evaluate": "report.json",
}

DEFAULT_PATTERN_HOURS = {
    "weekday": {7: 0.10, 17: 0.35, 18: 0.50, 19: 0.40, 20: 0.25},
    "weekend": {10: 0.30, 11: 0.35, 12: 0.30, 18: 0.35, 19: 0.30},
}


def default_pattern(noise: float) -> UsagePattern:
    return UsagePattern.weekly(
        DEFAULT_PATTERN_HOURS["weekday"],
        DEFAULT_PATTERN_HOURS["weekend"],
        durations=((2, 0.2), (3, 0.3), (4, 0.3), (6, 0.2)),
        energy_mean_kwh=0.4,
        energy_spread_kwh=0.08,
        noise=noise,
    )


def _series_to_json(s: ActivationSeries) -> dict:
    return {
        "resolution": s.resolution,
        "device_id": s.device_id,
        "start_date": s.start_date.isoformat(),
        "days": s.days.astype(int).tolist(),
        "missing": s.missing.astype(int).tolist(),
        "group_spec": s.group_spec.to_json() if s.group_spec else None,
    }


def _series_from_json(d: dict, hourly_parent: ActivationSeries | None = None) -> ActivationSeries:
    return ActivationSeries(
        resolution=d["resolution"],
        device_id=d["device_id"],
        start_date=date.fromisoformat(d["start_date"]),
        days=np.asarray(d["days"], dtype=np.int8),
        missing=np.asarray(d["missing"], dtype=bool),
        group_spec=GroupSpec.from_json(d["group_spec"]) if d.get("group_spec") else None,
        hourly_parent=hourly_parent,
    )


def _slice_series_days(s: ActivationSeries, lo: int, hi: int) -> ActivationSeries:
    return ActivationSeries(
        resolution=s.resolution,
        device_id=s.device_id,
        start_date=s.start_date + timedelta(days=lo),
        days=s.days[lo:hi],
        missing=s.missing[lo:hi],
        group_spec=s.group_spec,
    )


def _slice_readings_days(r: ReadingSeries, day_lo: int, day_hi: int) -> ReadingSeries:
    first, n_days = _day_grid(r)
    lo = first + day_lo * QUARTERS_PER_DAY
    hi = first + min(day_hi, n_days) * QUARTERS_PER_DAY
    return ReadingSeries(
        device_id=r.device_id,
        start=r.start + lo * timedelta(minutes=15),
        values=r.values[lo:hi],
        missing=r.missing[lo:hi],
    )


def stage_synth(cfg: ExperimentConfig) -> dict:
    """Generate the device and market CSVs described by cfg.synth."""
    if cfg.synth is None:
        raise ConfigError("config has no synth section")
    s = cfg.synth
    device_seed = s.device_seed if s.device_seed is not None else cfg.seed
    market_seed = s.market_seed if s.market_seed is not None else cfg.seed + 1
    readings = gen_device(default_pattern(s.noise), s.days, device_seed, gap_rate=s.gap_rate)
    # Two spare market days so the last test day's horizon stays covered.
    market = gen_market(
        s.days + 2,
        market_seed,
        spot_level=s.spot_level,
        imbalance_scale=s.imbalance_scale,
        balanced_fraction=s.balanced_fraction,
        price_style=s.price_style,
    )
    os.makedirs(os.path.dirname(cfg.readings_csv) or ".", exist_ok=True)
    os.makedirs(os.path.dirname(cfg.market_csv) or ".", exist_ok=True)
    write_readings_csv(cfg.readings_csv, readings)
    write_market_csv(cfg.market_csv, market)
    return {"readings_csv": cfg.readings_csv, "market_csv": cfg.market_csv}


def stage_ingest(cfg: ExperimentConfig) -> dict:
    """Load readings, aggregate to the configured resolution, and persist the
    activation series plus the train/test day split."""
    readings = load_readings(cfg.readings_csv)
    hourly = to_hourly(readings, cfg.threshold_watts, cfg.label_operating_hours)
    cut = int(hourly.n_days * cfg.train_fraction)
    if cut <= WARMUP_DAYS or cut >= hourly.n_days:
        raise ConfigError(
            f"train fraction {cfg.train_fraction} leaves no usable train/test days"
        )
    if cfg.resolution == "hourly":
        series = hourly
        group_spec = None
    elif cfg.resolution == "group":
        group_spec = (
            GroupSpec(cfg.groups)
            if cfg.groups
            else derive_groups(_slice_series_days(hourly, 0, cut), cfg.group_count)
        )
        series = to_group(hourly, group_spec)
    else:
        series = to_daily(hourly)
        group_spec = None
    data = {
        "hourly": _series_to_json(hourly),
        "series": _series_to_json(series),
        "cut": cut,
        "n_days": hourly.n_days,
    }
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_artifact(
        cfg.path(ARTIFACTS["ingest"]),
        "ingest",
        data,
        config=cfg.to_json(),
        inputs={"readings_csv": cfg.readings_csv},
    )
    return data


def _load_activation(cfg: ExperimentConfig) -> tuple[ActivationSeries, ActivationSeries, int]:
    doc = read_artifact(cfg.path(ARTIFACTS["ingest"]), "ingest")
    hourly = _series_from_json(doc["data"]["hourly"])
    series = _series_from_json(doc["data"]["series"], hourly_parent=hourly)
    return hourly, series, int(doc["data"]["cut"])


def stage_train(cfg: ExperimentConfig) -> dict:
    """Cross-validate, fit the configured model on the training window, and
    select its decision threshold by maximum F1 on the training scores."""
    _, series, cut = _load_activation(cfg)
    if cfg.model == "pm":
        train_slice = _slice_series_days(series, 0, cut)
        pm = classifier.pm_fit(train_slice)
        train_scores = np.array(
            [
                classifier.pm_predict(pm, train_slice.weekday(day), slot)
                for day in range(train_slice.n_days)
                for slot in range(train_slice.slots_per_day)
            ]
        )
        train_labels = train_slice.days.reshape(-1)
        threshold = classifier.select_threshold(train_scores, train_labels)
        model_json = pm.with_threshold(threshold).to_json()
        extra = {"cv_table": None, "best_lambda": None}
    else:
        layout = FeatureLayout.for_resolution(cfg.resolution)
        matrix = build_matrix(series, layout, first_day=WARMUP_DAYS, last_day=cut)
        weights = (
            classifier.balanced_weights(matrix.labels) if cfg.model == "lr" else (1.0, 1.0)
        )
        best_lambda, cv_table = classifier.cross_validate(
            matrix, cfg.lambda_grid, cfg.folds, weights
        )
        fit_matrix = matrix
        if cfg.oversample:
            fit_matrix = classifier.oversample(matrix, cfg.oversample_ratio, cfg.seed)
        model = classifier.train(fit_matrix, best_lambda, weights)
        train_scores = classifier.scores(model, matrix.rows)
        threshold = classifier.select_threshold(train_scores, matrix.labels)
        model_json = model.to_json()
        model_json["threshold"] = threshold
        extra = {
            "cv_table": [
                {
                    "lambda": row["lambda"],
                    "mean_auc_pr": row["mean_auc_pr"],
                    "fold_aucs": row["fold_aucs"],
                }
                for row in cv_table
            ],
            "best_lambda": best_lambda,
        }
    data = {"model": model_json, **extra}
    write_artifact(
        cfg.path(ARTIFACTS["train"]),
        "train",
        data,
        config=cfg.to_json(),
        inputs={"activations": cfg.path(ARTIFACTS["ingest"])},
    )
    return data


def _load_model(cfg: ExperimentConfig):
    doc = read_artifact(cfg.path(ARTIFACTS["train"]), "train")
    model_json = doc["data"]["model"]
    if model_json["kind"] == "pm":
        return classifier.PMModel.from_json(model_json), doc
    return classifier.LogisticModel.from_json(model_json), doc


def stage_forecast(cfg: ExperimentConfig) -> dict:
    """Score every test-window prediction point with the trained model."""
    _, series, cut = _load_activation(cfg)
    model, _ = _load_model(cfg)
    first_test = max(cut, WARMUP_DAYS)
    if isinstance(model, classifier.PMModel):
        keys = [
            (day, slot)
            for day in range(first_test, series.n_days)
            for slot in range(series.slots_per_day)
        ]
        score_values = np.array(
            [classifier.pm_predict(model, series.weekday(day), slot) for day, slot in keys]
        )
        labels = np.array([int(series.days[day, slot]) for day, slot in keys], dtype=np.int8)
        threshold = model.threshold
    else:
        matrix = build_matrix(series, model.layout, first_day=first_test)
        keys = list(matrix.keys)
        score_values = classifier.scores(model, matrix.rows)
        labels = matrix.labels
        threshold = model.threshold
    data = {
        "keys": [[int(d), int(s)] for d, s in keys],
        "scores": [float(v) for v in score_values],
        "labels": [int(v) for v in labels],
        "threshold": threshold,
        "first_test_day": first_test,
    }
    write_artifact(
        cfg.path(ARTIFACTS["forecast"]),
        "forecast",
        data,
        config=cfg.to_json(),
        inputs={
            "activations": cfg.path(ARTIFACTS["ingest"]),
            "model": cfg.path(ARTIFACTS["train"]),
        },
    )
    return data


def _build_profiles(cfg: ExperimentConfig, readings: ReadingSeries, series: ActivationSeries, cut: int):
    """PSM profiles from the training window, in hourly MWh units."""
    train_readings = _slice_readings_days(readings, 0, cut)

    def mwh(profile: EnergyProfile) -> EnergyProfile:
        hourly_units = to_hourly_units(profile)
        return EnergyProfile(units=hourly_units.units * KWH_TO_MWH)

    if cfg.resolution == "hourly":
        by_slot = {
            h: mwh(profiles.hourly_profile(train_readings, cfg.threshold_watts, h, cfg.psm_averaging))
            for h in range(24)
        }
        return by_slot, None
    if cfg.resolution == "group":
        by_slot = {
            gi: mwh(
                profiles.group_profile(
                    train_readings, cfg.threshold_watts, series.group_spec.groups[gi], cfg.psm_averaging
                )
            )
            for gi in range(len(series.group_spec))
        }
        return by_slot, None
    start_weekday = train_readings.start.weekday()
    by_weekday = {
        wd: mwh(
            profiles.daily_profile(
                train_readings, cfg.threshold_watts, wd, start_weekday, cfg.psm_averaging
            )
        )
        for wd in range(7)
    }
    return {0: next(iter(by_weekday.values()))}, by_weekday


def _build_cases(
    cfg: ExperimentConfig,
    readings: ReadingSeries,
    series: ActivationSeries,
    market: MarketSeries,
    scores_doc: dict,
) -> list[evaluate.DayCase]:
    """Group per-slot scores into per-day evaluation cases with the day's
    actual operation runs (hourly MWh units, start hour)."""
    keys = scores_doc["keys"]
    score_values = scores_doc["scores"]
    by_day: dict[int, dict[int, float]] = {}
    for (day, slot), value in zip(keys, score_values):
        by_day.setdefault(int(day), {})[int(slot)] = float(value)
    runs = profiles.collect_runs(readings, cfg.threshold_watts)
    runs_by_day: dict[int, list] = {}
    for run in runs:
        runs_by_day.setdefault(run.day, []).append(run)
    cases = []
    for day in sorted(by_day):
        slot_scores = by_day[day]
        scores_arr = np.array([slot_scores[s] for s in range(series.slots_per_day)])
        labels_arr = series.days[day].astype(float)
        day_start = datetime.combine(series.date_of(day), datetime.min.time())
        try:
            market_index = market.index_of(day_start)
        except Exception:
            raise CoverageError(f"market series does not contain {day_start}") from None
        actual = tuple(
            (run.hour, to_hourly_units(profiles.EnergyProfile(run.quarters)).units * KWH_TO_MWH)
            for run in runs_by_day.get(day, [])
        )
        cases.append(
            evaluate.DayCase(
                day=day,
                weekday=series.weekday(day),
                market_index=market_index,
                scores=scores_arr,
                labels=labels_arr,
                actual_runs=actual,
            )
        )
    return cases


def _context(
    cfg: ExperimentConfig,
    market: MarketSeries,
    cases: list[evaluate.DayCase],
    slot_profiles: dict,
    weekday_profiles: dict | None,
    hourly_train: ActivationSeries,
    series: ActivationSeries,
    tau: int,
) -> evaluate.EvaluationContext:
    return evaluate.EvaluationContext(
        market=market,
        days=tuple(cases),
        profiles=slot_profiles,
        profiles_by_weekday=weekday_profiles,
        tau=tau,
        resolution=cfg.resolution,
        anchors=AnchorModel.from_series(hourly_train),
        group_spec=series.group_spec,
        strict=cfg.strict,
        price_mode=cfg.price_mode,
        loss_mode=cfg.loss_mode,
        objective=cfg.objective,
        budget=cfg.exact_budget,
    )


def _eval_inputs(cfg: ExperimentConfig):
    hourly, series, cut = _load_activation(cfg)
    scores_doc = read_artifact(cfg.path(ARTIFACTS["forecast"]), "forecast")["data"]
    readings = load_readings(cfg.readings_csv)
    market = load_market(cfg.market_csv)
    slot_profiles, weekday_profiles = _build_profiles(cfg, readings, series, cut)
    cases = _build_cases(cfg, readings, series, market, scores_doc)
    hourly_train = _slice_series_days(hourly, 0, cut)
    return hourly, series, cut, scores_doc, readings, market, slot_profiles, weekday_profiles, cases, hourly_train


def stage_schedule(cfg: ExperimentConfig) -> dict:
    """Schedule the thresholded forecasts for every test day and tau."""
    (_, series, _, scores_doc, _, market, slot_profiles, weekday_profiles, cases, hourly_train) = _eval_inputs(cfg)
    threshold = float(scores_doc["threshold"])
    per_tau = {}
    for tau in cfg.tau_list:
        ctx = _context(cfg, market, cases, slot_profiles, weekday_profiles, hourly_train, series, tau)
        day_rows = []
        for case in cases:
            outcome = evaluate.evaluate_day(ctx, case, threshold)
            day_rows.append(
                {
                    "date": series.date_of(case.day).isoformat(),
                    "assignments": [
                        {"slot": o.origin[1], "anchor": o.earliest_start, "start_hour": s}
                        for o, s in zip(outcome.offers, outcome.schedule.starts)
                    ],
                    "objective_mwh": outcome.schedule.objective,
                    "delta_r": outcome.delta_r,
                }
            )
        per_tau[str(tau)] = day_rows
    data = {"threshold": threshold, "per_tau": per_tau}
    write_artifact(
        cfg.path(ARTIFACTS["schedule"]),
        "schedule",
        data,
        config=cfg.to_json(),
        inputs={
            "scores": cfg.path(ARTIFACTS["forecast"]),
            "activations": cfg.path(ARTIFACTS["ingest"]),
            "readings_csv": cfg.readings_csv,
            "market_csv": cfg.market_csv,
        },
    )
    return data


def _threshold_grid(score_values: np.ndarray, levels: int, must_include: float) -> list[float]:
    distinct = np.unique(score_values)
    if len(distinct) <= levels:
        grid = distinct
    else:
        qs = np.linspace(0.0, 1.0, levels)
        grid = np.unique(np.quantile(distinct, qs, method="nearest"))
    grid = np.unique(np.append(grid, must_include))
    return [float(t) for t in grid[::-1]]


def _tau_row(args):
    ctx, cases, threshold, tau = args
    agg = {"tau": tau, "delta_r": 0.0, "loss": 0.0, "net": 0.0}
    optimal = 0.0
    for case in cases:
        outcome = evaluate.evaluate_day(ctx, case, threshold)
        agg["delta_r"] += outcome.delta_r
        agg["loss"] += outcome.loss
        agg["net"] += outcome.net
        optimal += evaluate.optimal_delta(ctx, case)
    agg["optimal_delta_r"] = optimal
    agg["pct_optimal"] = (agg["net"] / optimal) if optimal > 0 else None
    return agg


def stage_evaluate(cfg: ExperimentConfig) -> dict:
    """Produce report.json / report.csv: PR and F1 curves, the savings sweep
    across thresholds at the widest tau, and per-tau savings at the model's
    operating threshold."""
    (_, series, _, scores_doc, _, market, slot_profiles, weekday_profiles, cases, hourly_train) = _eval_inputs(cfg)
    score_values = np.asarray(scores_doc["scores"], dtype=float)
    labels = np.asarray(scores_doc["labels"], dtype=np.int8)
    threshold = float(scores_doc["threshold"])

    curve = evaluate.pr_curve(score_values, labels)
    f1_rows = evaluate.f1_sweep(score_values, labels)

    tau_ref = max(cfg.tau_list)
    ctx_ref = _context(cfg, market, cases, slot_profiles, weekday_profiles, hourly_train, series, tau_ref)
    grid = _threshold_grid(score_values, cfg.threshold_levels, threshold)
    sweep_rows = evaluate.savings_sweep(ctx_ref, grid)

    tau_jobs = [
        (
            _context(cfg, market, cases, slot_profiles, weekday_profiles, hourly_train, series, tau),
            cases,
            threshold,
            tau,
        )
        for tau in cfg.tau_list
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            tau_rows = list(pool.map(_tau_row, tau_jobs))
    else:
        tau_rows = [_tau_row(job) for job in tau_jobs]

    best_sweep = max(sweep_rows, key=lambda r: r["net"])
    data = {
        "auc_pr": curve.auc,
        "threshold": threshold,
        "tau_ref": tau_ref,
        "pr_curve": {
            "thresholds": [float(t) for t in curve.thresholds],
            "precision": [float(p) for p in curve.precision],
            "recall": [float(r) for r in curve.recall],
        },
        "f1_sweep": f1_rows,
        "savings_by_threshold": sweep_rows,
        "savings_by_tau": tau_rows,
        "summary": {
            "best_threshold_net": best_sweep["net"],
            "best_threshold": best_sweep["threshold"],
            "best_threshold_pct_optimal": best_sweep["pct_optimal"],
        },
    }
    write_artifact(
        cfg.path(ARTIFACTS["evaluate"]),
        "evaluate",
        data,
        config=cfg.to_json(),
        inputs={
            "scores": cfg.path(ARTIFACTS["forecast"]),
            "model": cfg.path(ARTIFACTS["train"]),
            "activations": cfg.path(ARTIFACTS["ingest"]),
            "readings_csv": cfg.readings_csv,
            "market_csv": cfg.market_csv,
        },
    )
    _write_report_csv(cfg.path("report.csv"), sweep_rows)
    return data


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_report_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(evaluate.REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in evaluate.REPORT_COLUMNS])


def stage_report(cfg: ExperimentConfig) -> dict:
    """Render plot-ready CSVs from report.json."""
    doc = read_artifact(cfg.path(ARTIFACTS["evaluate"]), "evaluate")
    data = doc["data"]
    pr = data["pr_curve"]
    with open(cfg.path("pr_curve.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "precision"])
        for t, r, p in zip(pr["thresholds"], pr["recall"], pr["precision"]):
            writer.writerow([_fmt(t), _fmt(r), _fmt(p)])
    with open(cfg.path("f1_sweep.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall", "f1"])
        for row in data["f1_sweep"]:
            writer.writerow([_fmt(row[c]) for c in ("threshold", "precision", "recall", "f1")])
    _write_report_csv(cfg.path("savings_by_threshold.csv"), data["savings_by_threshold"])
    with open(cfg.path("savings_by_tau.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "delta_r", "loss", "net", "optimal_delta_r", "pct_optimal"])
        for row in data["savings_by_tau"]:
            writer.writerow(
                [_fmt(row[c]) for c in ("tau", "delta_r", "loss", "net", "optimal_delta_r", "pct_optimal")]
            )
    return data


def summary_lines(report: dict) -> list[str]:
    lines = ["tau  delta_r        loss           net            pct_optimal"]
    for row in report["savings_by_tau"]:
        pct = "n/a" if row["pct_optimal"] is None else f"{100 * row['pct_optimal']:.1f}%"
        lines.append(
            f"{row['tau']:>3}  {row['delta_r']:<13.6g}  {row['loss']:<13.6g}  "
            f"{row['net']:<13.6g}  {pct}"
        )
    s = report["summary"]
    pct = (
        "n/a"
        if s["best_threshold_pct_optimal"] is None
        else f"{100 * s['best_threshold_pct_optimal']:.1f}%"
    )
    lines.append(
        f"best net over thresholds (tau={report['tau_ref']}): {s['best_threshold_net']:.6g} "
        f"at threshold {s['best_threshold']:.4g} ({pct} of optimal)"
    )
    lines.append(f"AUC-PR: {report['auc_pr']:.4f}  operating threshold: {report['threshold']:.4g}")
    return lines


def run_all(cfg: ExperimentConfig) -> dict:
    """Full pipeline; generates synthetic inputs first when configured."""
    if cfg.synth is not None:
        stage_synth(cfg)
    stage_ingest(cfg)
    stage_train(cfg)
    stage_forecast(cfg)
    stage_schedule(cfg)
    report = stage_evaluate(cfg)
    stage_report(cfg)
    return report
