"""Command-line interface.

    flexsim <subcommand> --config <path> [--tau N] [--resolution R]
            [--seed S] [--jobs N] [--out DIR]

Subcommands: run, synth, ingest, train, forecast, schedule, evaluate,
report.  Exit codes: 0 ok, 1 internal error, 2 usage/config error,
3 data-validation error.  A failed stage removes its partial outputs.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import pipeline
from .artifacts import canonical_json
from .config import ExperimentConfig, apply_overrides, load_config
from .errors import (
    ConfigError,
    FlexsimError,
    StaleArtifactError,
    ValidationError,
)

STAGE_OUTPUTS = {
    "ingest": ("activations.json",),
    "train": ("model.json",),
    "forecast": ("scores.json",),
    "schedule": ("schedule.json",),
    "evaluate": ("report.json", "report.csv"),
    "report": ("pr_curve.csv", "f1_sweep.csv", "savings_by_threshold.csv", "savings_by_tau.csv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexsim",
        description="Device-level demand-flexibility forecasting and market scheduling",
    )
    parser.add_argument(
        "command",
        choices=["run", "synth", "ingest", "train", "forecast", "schedule", "evaluate", "report"],
    )
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument("--tau", type=int, help="override: single time flexibility in hours")
    parser.add_argument("--resolution", choices=["hourly", "group", "daily"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, help="parallel workers for per-tau evaluation")
    parser.add_argument("--out", help="override the output directory")
    return parser


def _check_inputs(cfg: ExperimentConfig, need_readings: bool, need_market: bool) -> None:
    if need_readings and not os.path.exists(cfg.readings_csv):
        raise ConfigError(f"readings file not found: {cfg.readings_csv}")
    if need_market and not os.path.exists(cfg.market_csv):
        raise ConfigError(f"market file not found: {cfg.market_csv}")


def _run_stage(cfg: ExperimentConfig, name: str, fn):
    try:
        return fn(cfg)
    except BaseException:
        for out in STAGE_OUTPUTS.get(name, ()):
            path = cfg.path(out)
            if os.path.exists(path):
                os.remove(path)
        raise


def _dispatch(command: str, cfg: ExperimentConfig) -> None:
    if command == "synth":
        result = _run_stage(cfg, "synth", pipeline.stage_synth)
        print(f"wrote {result['readings_csv']} and {result['market_csv']}")
        return
    if command == "ingest":
        _check_inputs(cfg, need_readings=True, need_market=False)
        data = _run_stage(cfg, "ingest", pipeline.stage_ingest)
        print(
            f"ingested {data['n_days']} days at {cfg.resolution} resolution "
            f"(train/test split at day {data['cut']})"
        )
        return
    if command == "train":
        data = _run_stage(cfg, "train", pipeline.stage_train)
        if data.get("best_lambda") is not None:
            print(f"trained {cfg.model} model, best lambda {data['best_lambda']:g}")
        else:
            print(f"trained {cfg.model} model")
        return
    if command == "forecast":
        data = _run_stage(cfg, "forecast", pipeline.stage_forecast)
        print(f"scored {len(data['scores'])} prediction points")
        return
    if command == "schedule":
        _check_inputs(cfg, need_readings=True, need_market=True)
        data = _run_stage(cfg, "schedule", pipeline.stage_schedule)
        for tau, rows in data["per_tau"].items():
            objectives = ", ".join(f"{r['date']}: {r['objective_mwh']:.6g}" for r in rows)
            print(f"tau={tau}: {objectives}")
        return
    if command == "evaluate":
        _check_inputs(cfg, need_readings=True, need_market=True)
        data = _run_stage(cfg, "evaluate", pipeline.stage_evaluate)
        print(f"AUC-PR: {data['auc_pr']:.4f}")
        print(f"report written to {cfg.path('report.json')} and {cfg.path('report.csv')}")
        return
    if command == "report":
        _run_stage(cfg, "report", pipeline.stage_report)
        print(f"plot-ready CSVs written under {cfg.out_dir}")
        return
    if command == "run":
        if cfg.synth is None:
            _check_inputs(cfg, need_readings=True, need_market=True)
        report = None
        for name, fn in (
            ("synth", pipeline.stage_synth) if cfg.synth is not None else (None, None),
            ("ingest", pipeline.stage_ingest),
            ("train", pipeline.stage_train),
            ("forecast", pipeline.stage_forecast),
            ("schedule", pipeline.stage_schedule),
            ("evaluate", pipeline.stage_evaluate),
            ("report", pipeline.stage_report),
        ):
            if name is None:
                continue
            result = _run_stage(cfg, name, fn)
            if name == "evaluate":
                report = result
        for line in pipeline.summary_lines(report):
            print(line)
        return
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(
            cfg,
            out_dir=args.out,
            resolution=args.resolution,
            seed=args.seed,
            jobs=args.jobs,
            tau=args.tau,
        )
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(cfg.path("config.resolved.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(canonical_json(cfg.to_json()))
        _dispatch(args.command, cfg)
        return 0
    except ConfigError as exc:
        print(f"flexsim config: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"flexsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except StaleArtifactError as exc:
        print(f"flexsim {args.command}: stale artifact: {exc}", file=sys.stderr)
        return 1
    except FlexsimError as exc:
        print(f"flexsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
