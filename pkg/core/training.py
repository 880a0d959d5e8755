"""
Mini-batch maximum-likelihood training.

Each epoch shuffles the training set, takes AdamW steps on mini-batch NLL
gradients, then scores the validation set with fixed sample streams so epochs
are comparable. The best parameters by validation NLL are kept (and written to
the checkpoint path when one is given).
"""

import logging
import time
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from core.likelihood import NLLConfig, batch_loss_and_grad, dataset_nll
from core.model import InfluenceModel, ModelSpec
from core.optimizer import OptimizerConfig, adamw_step
from core.param_store import ParamStore
from core.sequences import EventSequence
from error_handling import ConfigError, ContractViolation, DivergenceError, LikelihoodError
from utils.constants import DEFAULT_EPOCHS, DEFAULT_PATIENCE
from utils.random_streams import derive_rng, STREAM_VALIDATION

STOP_COMPLETED = "completed"
STOP_EARLY = "early_stopping"
STOP_DIVERGED = "diverged"

# init stream key, kept apart from the per-epoch sample streams
STREAM_INIT = 2 ** 31 - 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    shuffle: bool = True
    progress: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1 (got {self.epochs})")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1 (got {self.patience})")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_nll: float
    wall_seconds: float


@dataclass
class TrainResult:
    store: ParamStore
    best_epoch: int
    best_val_nll: float
    history: List[EpochRecord] = field(default_factory=list)
    stop_reason: str = STOP_COMPLETED

    def epoch_loss_variance(self) -> float:
        """Variance of training NLL across epochs (estimator stability)."""
        return epoch_loss_variance(self.history)


def epoch_loss_variance(history: Sequence[EpochRecord], skip: int = 0) -> float:
    losses = np.array([r.train_nll for r in history[skip:]])
    return float(losses.var()) if losses.size > 1 else 0.0


def _is_divergence(error: Exception) -> bool:
    if isinstance(error, DivergenceError):
        return True
    return isinstance(error, LikelihoodError) and isinstance(error.original_error, DivergenceError)


class Trainer:
    """Owns the optimisation loop for one model specification."""

    def __init__(self, spec: ModelSpec, nll_config: NLLConfig, optimizer_config: OptimizerConfig,
                 train_config: TrainConfig, task_manager=None, checkpoint_path=None,
                 metadata: Optional[dict] = None):
        self.spec = spec
        self.nll_config = nll_config
        self.optimizer_config = optimizer_config
        self.train_config = train_config
        self.task_manager = task_manager
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.metadata = dict(metadata or {})

    def initial_store(self) -> ParamStore:
        return ParamStore.initialize(self.spec.layout(), derive_rng(self.train_config.seed, STREAM_INIT))

    def validation_nll(self, store: ParamStore, sequences: Sequence[EventSequence]) -> float:
        model = InfluenceModel.from_store(store, self.spec)
        report = dataset_nll(sequences, model, self.nll_config, STREAM_VALIDATION, self.task_manager)
        return report.total_nll

    def _emit(self, event_type: str, data: dict):
        if self.task_manager is not None:
            self.task_manager.emit(event_type, data)

    def _save(self, store: ParamStore, extra: dict):
        if self.checkpoint_path is not None:
            store.save(self.checkpoint_path, {**self.metadata, **extra})

    def run_epoch(self, store: ParamStore, train: Sequence[EventSequence], epoch: int) -> float:
        """One pass over the training set; returns the mean training NLL."""
        cfg = self.train_config
        batch_size = self.optimizer_config.batch_size
        order = np.arange(len(train))
        if cfg.shuffle:
            derive_rng(cfg.seed, epoch, len(train)).shuffle(order)

        total, count = 0.0, 0
        batches = range(0, len(order), batch_size)
        progress = tqdm(batches, desc=f"epoch {epoch}", unit="batch", leave=False,
                        disable=not cfg.progress)
        for start in progress:
            idx = order[start:start + batch_size].tolist()
            rngs = [derive_rng(self.nll_config.seed, epoch, i) for i in idx]
            result = batch_loss_and_grad([train[i] for i in idx], store, self.spec, self.nll_config,
                                         rngs, self.task_manager)
            adamw_step(store, result.gradient, self.optimizer_config)
            total += result.mean_nll * len(idx)
            count += len(idx)
            progress.set_postfix(nll=f"{result.mean_nll:.4f}")
        return total / count

    def fit(self, train: Sequence[EventSequence], val: Sequence[EventSequence],
            store: Optional[ParamStore] = None) -> TrainResult:
        train = list(train)
        val = list(val)
        if not train or not val:
            raise ContractViolation("Training needs non-empty training and validation sets")
        cfg = self.train_config
        store = store if store is not None else self.initial_store()
        best = store.copy()
        best_epoch, best_val = 0, float('inf')
        history: List[EpochRecord] = []
        stop_reason = STOP_COMPLETED
        since_best = 0

        logging.info(f"Training on {len(train)} sequences, validating on {len(val)} "
                     f"(batch {self.optimizer_config.batch_size}, Q={self.nll_config.segments}, "
                     f"estimator {self.nll_config.estimator})")

        for epoch in range(1, cfg.epochs + 1):
            started = time.time()
            last_good = store.copy()
            try:
                train_nll = self.run_epoch(store, train, epoch)
                val_nll = self.validation_nll(store, val)
                if not np.isfinite(val_nll):
                    raise DivergenceError("validation loss")
            except (DivergenceError, LikelihoodError) as e:
                if not _is_divergence(e):
                    raise
                logging.error(f"Training diverged in epoch {epoch}; keeping the last good parameters")
                self._emit('diverged', {'epoch': epoch, 'message': str(e).splitlines()[0]})
                if best_epoch == 0:
                    best = last_good
                    self._save(best, {'best_epoch': epoch - 1, 'stop_reason': STOP_DIVERGED})
                stop_reason = STOP_DIVERGED
                break

            record = EpochRecord(epoch, train_nll, val_nll, round(time.time() - started, 3))
            history.append(record)
            self._emit('epoch', asdict(record))
            logging.info(f"Epoch {epoch}: train NLL {train_nll:.4f}, val NLL {val_nll:.4f} "
                         f"({record.wall_seconds:.1f}s)")

            if val_nll < best_val:
                best_val, best_epoch, since_best = val_nll, epoch, 0
                best = store.copy()
                self._save(best, {'best_epoch': epoch, 'best_val_nll': val_nll})
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    logging.info(f"No validation improvement for {cfg.patience} epochs; stopping")
                    stop_reason = STOP_EARLY
                    break

        return TrainResult(best, best_epoch, best_val, history, stop_reason)
