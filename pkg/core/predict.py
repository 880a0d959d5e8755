"""
Next-event prediction and evaluation metrics.

The expected next time is t_last + integral_0^H exp(-Lambda(u)) du with
Lambda(u) the cumulative total intensity after the last event, truncated at a
horizon H proportional to the mean gap of the training data. The predicted type
is the most intense type at the predicted time.
"""

import csv
import json
import logging
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from core.sequences import EventSequence
from error_handling import ConfigError, ContractViolation, PredictionError
from utils.constants import (
    DEFAULT_TRUNCATION_MULTIPLIER, DEFAULT_GRID_POINTS, TYPE_AT_PREDICTED, TYPE_AT_TRUE
)


@dataclass(frozen=True)
class PredictConfig:
    truncation_multiplier: float = DEFAULT_TRUNCATION_MULTIPLIER
    inner_points: int = DEFAULT_GRID_POINTS
    outer_points: int = DEFAULT_GRID_POINTS
    type_at: str = TYPE_AT_PREDICTED
    mean_gap: Optional[float] = None

    def __post_init__(self):
        if not self.truncation_multiplier > 0:
            raise ConfigError(f"truncation_multiplier must be > 0 (got {self.truncation_multiplier})")
        if self.inner_points < 2 or self.outer_points < 2:
            raise ConfigError("inner_points and outer_points must be >= 2")
        if self.type_at not in (TYPE_AT_PREDICTED, TYPE_AT_TRUE):
            raise ConfigError(f"type_at must be '{TYPE_AT_PREDICTED}' or '{TYPE_AT_TRUE}' (got {self.type_at})")
        if self.mean_gap is not None and not self.mean_gap > 0:
            raise ConfigError(f"mean_gap must be > 0 (got {self.mean_gap})")

    @property
    def horizon(self) -> float:
        if self.mean_gap is None:
            raise ContractViolation(
                "Truncation horizon needs the mean inter-event gap of the training data",
                suggestion="Use a checkpoint written by `train`, or set predict.mean_gap")
        return self.truncation_multiplier * self.mean_gap

    def with_mean_gap(self, mean_gap: float) -> 'PredictConfig':
        return replace(self, mean_gap=float(mean_gap))

    def to_dict(self) -> dict:
        return asdict(self)


def expected_next_time(history: EventSequence, model, config: PredictConfig) -> float:
    """Truncated expectation of the next event time after `history` (t_last = 0 when empty)."""
    H = config.horizon
    t_last = history.last_time
    u = np.linspace(0.0, H, config.inner_points)
    total = model.intensity_grid(t_last + u, history, strict=False).sum(axis=0)
    if not np.all(np.isfinite(total)):
        raise PredictionError(
            f"Non-finite intensity after a history of {len(history)} events ending at t={t_last}")
    cumulative = cumulative_trapezoid(total, u, initial=0.0)
    v = np.linspace(0.0, H, config.outer_points)
    survival = np.exp(-np.interp(v, u, cumulative))
    return t_last + float(trapezoid(survival, v))


def predict_type(history: EventSequence, t_hat: float, model) -> int:
    """Most intense type at t_hat; ties go to the smallest mark."""
    if len(history) and t_hat <= history.last_time:
        raise ContractViolation(f"Prediction time {t_hat} is not after the last event at {history.last_time}")
    lam = model.intensity_grid(np.array([t_hat]), history)[:, 0]
    if not np.all(np.isfinite(lam)):
        raise PredictionError(f"Non-finite intensity at t={t_hat}")
    return int(np.argmax(lam))


@dataclass(frozen=True)
class PredictionRecord:
    seq: int
    idx: int
    t_true: float
    t_pred: float
    k_true: int
    k_pred: int


@dataclass
class EvalReport:
    time_rmse: float
    type_error_rate: float
    n_events: int
    skipped_sequences: int = 0
    records: List[PredictionRecord] = field(default_factory=list, repr=False)

    def squared_errors(self) -> np.ndarray:
        return np.array([(r.t_pred - r.t_true) ** 2 for r in self.records])

    def type_errors(self) -> np.ndarray:
        return np.array([float(r.k_pred != r.k_true) for r in self.records])

    def to_dict(self) -> dict:
        return {
            'time_rmse': self.time_rmse,
            'type_error_rate': self.type_error_rate,
            'n_events': self.n_events,
            'skipped_sequences': self.skipped_sequences,
        }


def _predict_sequence(job) -> List[PredictionRecord]:
    index, seq, model, config = job
    records = []
    for n, (t_true, k_true) in enumerate(seq):
        history = seq.prefix(n)
        t_pred = expected_next_time(history, model, config)
        if config.type_at == TYPE_AT_TRUE:
            k_pred = predict_type(seq.history_before(t_true), t_true, model)
        else:
            k_pred = predict_type(history, t_pred, model)
        records.append(PredictionRecord(index, n, t_true, t_pred, k_true, k_pred))
    return records


def evaluate(sequences: Sequence[EventSequence], model, config: PredictConfig,
             task_manager=None) -> EvalReport:
    """
    Predict every event of every sequence from its true prefix.

    Sequences without events are skipped and counted. Deterministic: no
    randomness is involved.
    """
    sequences = list(sequences)
    if not sequences:
        raise ContractViolation("Evaluation needs at least one sequence")
    jobs = [(i, seq, model, config) for i, seq in enumerate(sequences) if len(seq)]
    skipped = len(sequences) - len(jobs)
    if skipped:
        logging.info(f"Skipping {skipped} sequences without events")
    if not jobs:
        raise ContractViolation("No events to evaluate")

    if task_manager is not None:
        chunks = task_manager.map(_predict_sequence, jobs)
    else:
        chunks = [_predict_sequence(job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]

    residuals = np.array([r.t_pred - r.t_true for r in records])
    report = EvalReport(
        time_rmse=float(np.sqrt(np.mean(residuals ** 2))),
        type_error_rate=float(np.mean([r.k_pred != r.k_true for r in records])),
        n_events=len(records),
        skipped_sequences=skipped,
        records=records,
    )
    logging.info(f"Evaluated {report.n_events} events: RMSE {report.time_rmse:.4f}, "
                 f"type error {report.type_error_rate:.4f}")
    return report


@dataclass(frozen=True)
class BootstrapInterval:
    mean: float
    low: float
    high: float

    @property
    def excludes_zero(self) -> bool:
        return self.low > 0.0 or self.high < 0.0


def paired_bootstrap_ci(a, b, n_boot: int = 2000, alpha: float = 0.05, seed: int = 0) -> BootstrapInterval:
    """Percentile interval for mean(a - b) resampling paired entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise ContractViolation("Paired bootstrap needs two equal-length non-empty vectors")
    diffs = a - b
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, size=(n_boot, diffs.size))
    means = diffs[idx].mean(axis=1)
    low, high = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return BootstrapInterval(float(diffs.mean()), float(low), float(high))


def write_eval_json(report: EvalReport, path, config: Optional[dict] = None, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({**report.to_dict(), 'config': config or {}, **(extra or {})}, f, indent=2)
        f.write('\n')
    return path


def write_predictions_csv(records: Sequence[PredictionRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['seq', 'idx', 't_true', 't_pred', 'k_true', 'k_pred'])
        for r in records:
            writer.writerow([r.seq, r.idx, repr(r.t_true), repr(r.t_pred), r.k_true, r.k_pred])
    return path
