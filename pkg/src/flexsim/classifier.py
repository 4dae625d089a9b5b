"""L1-regularized logistic activation model and the frequency-table baseline.

Training maximizes the class-weighted mean log-likelihood minus an L1
penalty on the non-intercept weights, via proximal-gradient ascent with
soft-thresholding and a backtracking line search.  The objective is
normalized by the total sample weight so a given lambda means the same
thing regardless of dataset size.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateDataError, FlexsimError, ValidationError
from .evaluate import pr_curve
from .features import FeatureLayout, FeatureMatrix
from .ingest import ActivationSeries

PROB_EPS = 1e-12
REL_TOL = 1e-8
MAX_ITER = 5000


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    weights: np.ndarray
    lambda_: float
    class_weights: tuple[float, float]
    threshold: float
    layout: Optional[FeatureLayout] = field(default=None, repr=False)
    iterations: int = 0
    final_objective: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError("threshold must be in [0, 1]")
        if self.lambda_ < 0:
            raise ValidationError("lambda must be >= 0")
        if self.layout is not None and len(self.weights) != self.layout.width:
            raise ValidationError("weight vector width does not match layout")

    def to_json(self) -> dict:
        return {
            "kind": "logistic",
            "layout": self.layout.to_json() if self.layout else None,
            "intercept": self.intercept,
            "weights": [float(w) for w in self.weights],
            "lambda": self.lambda_,
            "class_weights": list(self.class_weights),
            "threshold": self.threshold,
            "meta": {"iterations": self.iterations, "final_objective": self.final_objective},
        }

    @classmethod
    def from_json(cls, data: dict) -> "LogisticModel":
        return cls(
            intercept=float(data["intercept"]),
            weights=np.array(data["weights"], dtype=float),
            lambda_=float(data["lambda"]),
            class_weights=tuple(float(w) for w in data["class_weights"]),
            threshold=float(data["threshold"]),
            layout=FeatureLayout.from_json(data["layout"]) if data.get("layout") else None,
            iterations=int(data["meta"]["iterations"]),
            final_objective=float(data["meta"]["final_objective"]),
        )


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def predict_proba(model: LogisticModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != model.weights.shape:
        raise ValidationError(f"feature width {x.shape} does not match model {model.weights.shape}")
    return float(sigmoid(model.intercept + model.weights @ x))


def scores(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != len(model.weights):
        raise ValidationError("feature width does not match model")
    return sigmoid(model.intercept + X @ model.weights)


def _sample_weights(labels: np.ndarray, class_weights: tuple[float, float]) -> np.ndarray:
    w0, w1 = class_weights
    if w0 <= 0 or w1 <= 0:
        raise ValidationError("class weights must be positive")
    return np.where(labels == 1, w1, w0)


def balanced_weights(labels: np.ndarray) -> tuple[float, float]:
    """Inverse-class-frequency weights (w0=1, w1=negatives/positives)."""
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels == 0))
    if pos == 0 or neg == 0:
        raise DegenerateDataError("both classes required for balanced weights")
    return (1.0, neg / pos)


def _loglik(z: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    pi = np.clip(sigmoid(z), PROB_EPS, 1.0 - PROB_EPS)
    return float(np.sum(w * (y * np.log(pi) + (1.0 - y) * np.log(1.0 - pi))))


def objective(
    intercept: float,
    weights: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    lambda_: float,
    class_weights: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Weighted mean log-likelihood minus the L1 penalty (intercept exempt)."""
    w = _sample_weights(y, class_weights)
    z = intercept + X @ weights
    return _loglik(z, y, w) / w.sum() - lambda_ * float(np.sum(np.abs(weights)))


def gradient(
    intercept: float,
    weights: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    class_weights: tuple[float, float] = (1.0, 1.0),
) -> np.ndarray:
    """Gradient of the smooth part; element 0 is the intercept component."""
    w = _sample_weights(y, class_weights)
    pi = sigmoid(intercept + X @ weights)
    resid = w * (y - pi) / w.sum()
    return np.concatenate(([resid.sum()], X.T @ resid))


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def train(
    data: FeatureMatrix,
    lambda_: float,
    class_weights: tuple[float, float] = (1.0, 1.0),
    max_iter: int = MAX_ITER,
    rel_tol: float = REL_TOL,
) -> LogisticModel:
    """Fit the penalized model by accelerated proximal-gradient ascent.

    Momentum restarts whenever the trial point would lower the objective, so
    the kept iterates never decrease it.  Deterministic: starts at zero,
    stops when the relative objective change of an accepted step drops below
    rel_tol or after max_iter steps.  The decision threshold is left at 0.5;
    select_threshold sets it afterwards.
    """
    X = np.ascontiguousarray(data.rows, dtype=float)
    y = data.labels.astype(float)
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("training data contains a single class")
    w = _sample_weights(y, class_weights)
    Z = w.sum()
    d = X.shape[1]

    def smooth(zv: np.ndarray) -> float:
        return _loglik(zv, y, w) / Z

    def penalty(th: np.ndarray) -> float:
        return lambda_ * float(np.sum(np.abs(th)))

    x0, xw = 0.0, np.zeros(d)
    zx = np.zeros(len(y))
    f_x = smooth(zx)
    prev0, prevw, zprev = x0, xw, zx
    t_mom = 1.0
    step = 1.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        beta = 0.0 if t_mom == 1.0 else (t_mom - 1.0) / t_mom
        y0 = x0 + beta * (x0 - prev0)
        yw = xw + beta * (xw - prevw)
        zy = zx + beta * (zx - zprev)
        pi = sigmoid(zy)
        resid = w * (y - pi) / Z
        g0 = resid.sum()
        g = X.T @ resid
        s_y = smooth(zy)
        while True:
            c0 = y0 + step * g0
            cw = _soft_threshold(yw + step * g, step * lambda_)
            zc = c0 + X @ cw
            d0 = c0 - y0
            dw = cw - yw
            quad = s_y + g0 * d0 + g @ dw - (d0 * d0 + dw @ dw) / (2.0 * step)
            if smooth(zc) >= quad - 1e-15:
                break
            step *= 0.5
            if step < 1e-18:
                raise FlexsimError("line search failed to make progress")
        f_c = smooth(zc) - penalty(cw)
        if f_c >= f_x:
            prev0, prevw, zprev = x0, xw, zx
            x0, xw, zx = c0, cw, zc
            t_next = (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom)) / 2.0
            converged = abs(f_c - f_x) <= rel_tol * (1.0 + abs(f_x))
            f_x = f_c
            t_mom = t_next
            step *= 1.1
            if converged:
                break
        else:
            # Momentum overshot; restart from the best point kept so far.
            prev0, prevw, zprev = x0, xw, zx
            t_mom = 1.0
    return LogisticModel(
        intercept=x0,
        weights=xw,
        lambda_=lambda_,
        class_weights=class_weights,
        threshold=0.5,
        layout=data.layout,
        iterations=iterations,
        final_objective=f_x,
    )


def _contiguous_folds(n: int, folds: int) -> list[np.ndarray]:
    edges = np.linspace(0, n, folds + 1).astype(int)
    return [np.arange(edges[i], edges[i + 1]) for i in range(folds)]


def cross_validate(
    data: FeatureMatrix,
    lambda_grid: Sequence[float],
    folds: int,
    class_weights: tuple[float, float] = (1.0, 1.0),
) -> tuple[float, list[dict]]:
    """Chronological contiguous k-fold CV scored by AUC-PR.

    Returns the best lambda (ties go to the larger, sparser value) and the
    per-lambda table of fold scores.
    """
    if folds < 2:
        raise ValidationError("folds must be >= 2")
    if not lambda_grid:
        raise ValidationError("lambda grid is empty")
    n = len(data)
    fold_indices = _contiguous_folds(n, folds)
    table = []
    for lam in lambda_grid:
        fold_aucs = []
        for val_idx in fold_indices:
            train_mask = np.ones(n, dtype=bool)
            train_mask[val_idx] = False
            val_labels = data.labels[val_idx]
            if len(np.unique(val_labels)) < 2:
                warnings.warn(f"skipping single-class validation fold (lambda={lam})")
                continue
            train_part = FeatureMatrix(
                rows=data.rows[train_mask],
                labels=data.labels[train_mask],
                keys=tuple(k for k, keep in zip(data.keys, train_mask) if keep),
                layout=data.layout,
            )
            try:
                model = train(train_part, lam, class_weights)
            except DegenerateDataError:
                warnings.warn(f"skipping fold with single-class training data (lambda={lam})")
                continue
            s = scores(model, data.rows[val_idx])
            fold_aucs.append(pr_curve(s, val_labels).auc)
        mean_auc = float(np.mean(fold_aucs)) if fold_aucs else None
        table.append({"lambda": lam, "mean_auc_pr": mean_auc, "fold_aucs": fold_aucs})
    scored = [row for row in table if row["mean_auc_pr"] is not None]
    if not scored:
        raise DegenerateDataError("every cross-validation fold was skipped")
    best = max(scored, key=lambda row: (row["mean_auc_pr"], row["lambda"]))
    return best["lambda"], table


def select_threshold(score_values: np.ndarray, labels: np.ndarray) -> float:
    """Distinct score maximizing F1 of predict-1-iff-score>=t; ties take
    the larger threshold."""
    score_values = np.asarray(score_values, dtype=float)
    labels = np.asarray(labels)
    total_pos = int(np.sum(labels == 1))
    if total_pos == 0:
        raise DegenerateDataError("no positive labels; threshold undefined")
    best_t = None
    best_f1 = -1.0
    for t in np.unique(score_values)[::-1]:
        pred = score_values >= t
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        fn = total_pos - tp
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t


def oversample(data: FeatureMatrix, ratio: float, seed: int) -> FeatureMatrix:
    """Duplicate minority rows (with replacement, seeded) until the minority
    count reaches ratio times its original size, then re-sort rows by key."""
    if ratio < 1:
        raise ValidationError("oversample ratio must be >= 1")
    pos = int(np.sum(data.labels == 1))
    neg = len(data) - pos
    minority = 1 if pos <= neg else 0
    minority_idx = np.flatnonzero(data.labels == minority)
    extra_count = int(round(ratio * len(minority_idx))) - len(minority_idx)
    if extra_count <= 0:
        return data
    rng = np.random.default_rng(seed)
    extra = rng.choice(minority_idx, size=extra_count, replace=True)
    all_idx = np.concatenate([np.arange(len(data)), extra])
    keys = list(data.keys) + [data.keys[i] for i in extra]
    order = sorted(range(len(all_idx)), key=lambda i: keys[i])
    picked = all_idx[order]
    return FeatureMatrix(
        rows=data.rows[picked],
        labels=data.labels[picked],
        keys=tuple(keys[i] for i in order),
        layout=data.layout,
    )


@dataclass(frozen=True)
class PMModel:
    """Historical activation frequencies keyed by (weekday, slot), with
    per-slot and global fallbacks for unseen combinations."""

    table: dict[tuple[int, int], float]
    slot_freq: dict[int, float]
    global_rate: float
    threshold: float = 0.5

    def to_json(self) -> dict:
        return {
            "kind": "pm",
            "table": [[dow, slot, p] for (dow, slot), p in sorted(self.table.items())],
            "slot_freq": [[slot, p] for slot, p in sorted(self.slot_freq.items())],
            "global_rate": self.global_rate,
            "threshold": self.threshold,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PMModel":
        return cls(
            table={(int(d), int(s)): float(p) for d, s, p in data["table"]},
            slot_freq={int(s): float(p) for s, p in data["slot_freq"]},
            global_rate=float(data["global_rate"]),
            threshold=float(data["threshold"]),
        )

    def with_threshold(self, t: float) -> "PMModel":
        return replace(self, threshold=t)


def pm_fit(train_series: ActivationSeries) -> PMModel:
    if train_series.n_days == 0:
        raise DegenerateDataError("empty training series")
    sums: dict[tuple[int, int], float] = {}
    counts: dict[tuple[int, int], int] = {}
    for day in range(train_series.n_days):
        dow = train_series.weekday(day)
        for slot in range(train_series.slots_per_day):
            key = (dow, slot)
            sums[key] = sums.get(key, 0.0) + float(train_series.days[day, slot])
            counts[key] = counts.get(key, 0) + 1
    table = {key: sums[key] / counts[key] for key in sums}
    slot_freq = {
        slot: float(train_series.days[:, slot].mean())
        for slot in range(train_series.slots_per_day)
    }
    return PMModel(table=table, slot_freq=slot_freq, global_rate=float(train_series.days.mean()))


def pm_predict(model: PMModel, day_of_week: int, slot: int) -> float:
    if (day_of_week, slot) in model.table:
        return model.table[(day_of_week, slot)]
    if slot in model.slot_freq:
        return model.slot_freq[slot]
    return model.global_rate
