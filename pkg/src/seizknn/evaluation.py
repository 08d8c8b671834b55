"""Monte Carlo cross-validation: stratified splits, confusion metrics, k/alpha sweeps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .detector import DetectorConfig, classify_batch
from .exceptions import ConfigError, InsufficientClass
from .model_store import TrainingStore, adapt, adapt_arrays
from .signal import Label, LabeledWindow, as_arrays

TRIAL_COLUMNS = ("k", "alpha", "seed", "accuracy")
AGGREGATE_COLUMNS = ("k", "alpha", "mean", "std", "n")


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    # independent streams per purpose so shuffling never perturbs the split
    return np.random.default_rng([int(seed), stream])


def split_indices(labels: np.ndarray, alpha_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Pick ``alpha_per_class`` rows of each binary class uniformly at random.

    Both index arrays come back in dataset order.
    """
    labels = np.asarray(labels)
    rng = _rng(seed)
    chosen = []
    for label in (Label.SEIZURE, Label.NONSEIZURE):
        pool = np.flatnonzero(labels == label)
        if pool.size < alpha_per_class:
            raise InsufficientClass(label.name, int(pool.size), alpha_per_class)
        chosen.append(rng.choice(pool, size=alpha_per_class, replace=False))
    train = np.sort(np.concatenate(chosen))
    mask = np.ones(labels.shape[0], dtype=bool)
    mask[train] = False
    return train, np.flatnonzero(mask)


def stratified_split(
    dataset: Sequence[LabeledWindow], alpha_per_class: int, seed: int
) -> tuple[list[LabeledWindow], list[LabeledWindow]]:
    labels = np.array([int(lw.binary_label) for lw in dataset])
    train, test = split_indices(labels, alpha_per_class, seed)
    return [dataset[i] for i in train], [dataset[i] for i in test]


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    seed: int
    k: int
    alpha: int
    filter_cutoff_hz: float
    filter_order: int
    q_format: str
    features: str = "raw"

    @property
    def n_test(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n_test if self.n_test else math.nan

    @property
    def sensitivity(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def specificity(self) -> float | None:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else None

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "n_test": self.n_test,
            "seed": self.seed,
            "config": {
                "k": self.k,
                "alpha": self.alpha,
                "filter": {"cutoff_hz": self.filter_cutoff_hz, "order": self.filter_order},
                "q_format": self.q_format,
                "features": self.features,
            },
        }


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true) == Label.SEIZURE
    y_pred = np.asarray(y_pred) == Label.SEIZURE
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    return tp, fp, fn, tn


class Evaluator:
    """Holds one dataset as arrays so repeated trials skip the restacking."""

    def __init__(self, dataset: Sequence[LabeledWindow]):
        self.X, self.y, self.source = as_arrays(dataset)

    def evaluate(
        self,
        config: DetectorConfig,
        seed: int,
        shuffle_labels: bool = False,
        test_on_train: bool = False,
    ) -> EvalReport:
        config.validate()
        train, test = split_indices(self.y, config.alpha, seed)
        train_labels = self.y[train]
        if shuffle_labels:
            train_labels = _rng(seed, 1).permutation(train_labels)
        store = TrainingStore(config.alpha, config.feature_len, config.q_format)
        adapt_arrays(store, self.X[train], train_labels, config.coefficients(), config.q_format, config.features)
        if test_on_train:
            test = train
        predicted, _ = classify_batch(self.X[test], store, config)
        tp, fp, fn, tn = confusion(self.y[test], predicted)
        return EvalReport(
            tp, fp, fn, tn, int(seed), config.k, config.alpha,
            config.filter.cutoff_hz, config.filter.order, str(config.q_format), config.features,
        )

    def trials(
        self, config: DetectorConfig, n_trials: int, base_seed: int, shuffle_labels: bool = False
    ) -> "TrialSummary":
        reports = [
            self.evaluate(config, base_seed + i, shuffle_labels=shuffle_labels)
            for i in range(n_trials)
        ]
        return TrialSummary(tuple(reports))


def evaluate(
    dataset: Sequence[LabeledWindow], config: DetectorConfig, seed: int, **kwargs
) -> EvalReport:
    """Train on ``alpha`` random windows per class, test on all the rest."""
    return Evaluator(dataset).evaluate(config, seed, **kwargs)


def build_store(
    dataset: Sequence[LabeledWindow], config: DetectorConfig, seed: int | None = None
) -> TrainingStore:
    """Store from a stratified ``alpha``-per-class draw, or every window if ``seed`` is None."""
    train = dataset if seed is None else stratified_split(dataset, config.alpha, seed)[0]
    store = TrainingStore(config.alpha, config.feature_len, config.q_format)
    return adapt(store, train, config.coefficients(), config.q_format, config.features).store


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (``ddof=1``; 0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def _nanmean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass(frozen=True)
class TrialSummary:
    reports: tuple[EvalReport, ...]

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.reports]

    def to_json(self, reference_accuracy: float | None = None) -> dict:
        mean, std = mean_std(self.accuracies)
        out = {
            "n_trials": len(self.reports),
            "mean_accuracy": mean,
            "std_accuracy": std,
            "mean_sensitivity": _nanmean(r.sensitivity for r in self.reports),
            "mean_specificity": _nanmean(r.specificity for r in self.reports),
        }
        if reference_accuracy is not None:
            out["reference_accuracy"] = reference_accuracy
            out["delta_vs_reference"] = mean - reference_accuracy
        out["reports"] = [r.to_json() for r in self.reports]
        return out


# --- sweep -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    trial_rows: tuple[tuple[int, int, int, float], ...]
    aggregate_rows: tuple[tuple[int, int, float, float, int], ...] = field(default=())

    @classmethod
    def from_trials(cls, trial_rows) -> "SweepGrid":
        trial_rows = tuple(sorted(trial_rows, key=lambda r: (r[0], r[1], r[2])))
        cells: dict[tuple[int, int], list[float]] = {}
        for k, alpha, _seed, acc in trial_rows:
            cells.setdefault((k, alpha), []).append(acc)
        aggregates = tuple(
            (k, alpha, *mean_std(accs), len(accs)) for (k, alpha), accs in sorted(cells.items())
        )
        return cls(trial_rows, aggregates)

    def cell(self, k: int, alpha: int):
        for row in self.aggregate_rows:
            if row[0] == k and row[1] == alpha:
                return row
        raise KeyError((k, alpha))

    def best_cell(self):
        # highest mean; ties go to the smaller (k, alpha)
        return max(self.aggregate_rows, key=lambda r: (r[2], -r[0], -r[1]))

    def write_csv(self, trial_path, aggregate_path) -> None:
        _write_rows(trial_path, TRIAL_COLUMNS, self.trial_rows)
        _write_rows(aggregate_path, AGGREGATE_COLUMNS, self.aggregate_rows)


def _write_rows(path, columns, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _sweep_cell(evaluator: Evaluator, config: DetectorConfig, n_trials: int, base_seed: int):
    return [
        (config.k, config.alpha, base_seed + i, evaluator.evaluate(config, base_seed + i).accuracy)
        for i in range(n_trials)
    ]


def sweep(
    dataset: Sequence[LabeledWindow],
    k_values: Sequence[int],
    alpha_values: Sequence[int],
    n_trials: int,
    base_seed: int,
    config: DetectorConfig | None = None,
    n_jobs: int = 1,
) -> SweepGrid:
    """Evaluate every (k, alpha) cell over seeds ``base_seed .. base_seed+n_trials-1``."""
    if not k_values or not alpha_values or n_trials < 1:
        raise ConfigError("sweep needs k values, alpha values and at least one trial")
    base = config or DetectorConfig()
    configs = [replace(base, k=k, alpha=a).validate() for k in k_values for a in alpha_values]
    evaluator = Evaluator(dataset)
    if n_jobs == 1:
        chunks = [_sweep_cell(evaluator, c, n_trials, base_seed) for c in configs]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_sweep_cell)(evaluator, c, n_trials, base_seed) for c in configs
        )
    return SweepGrid.from_trials(row for chunk in chunks for row in chunk)
