"""Tests for the mini-batch training loop."""

import numpy as np
import pytest

from core.likelihood import NLLConfig
from core.model import ModelSpec
from core.optimizer import OptimizerConfig
from core.param_store import ParamStore
from core.simulate import homogeneous_process, sample_sequences
from core.training import (
    STOP_COMPLETED, STOP_DIVERGED, STOP_EARLY, EpochRecord, TrainConfig, Trainer, epoch_loss_variance
)
from core.task_manager import TaskManager
from error_handling import ConfigError, ContractViolation, DivergenceError, LikelihoodError


@pytest.fixture(scope='module')
def data():
    process = homogeneous_process(rate=1.0, horizon=6.0)
    return (sample_sequences(process, 16, seed=1, split=0),
            sample_sequences(process, 4, seed=1, split=1))


@pytest.fixture
def trainer_factory(tmp_path):
    spec = ModelSpec(num_types=1, embedding_dim=2, psi_hidden=(3,), phi_hidden=(3,))

    def build(epochs=3, patience=5, checkpoint=True, stream=None):
        tm = TaskManager(threads=1, stream=stream)
        return Trainer(spec, NLLConfig(segments=2), OptimizerConfig(learning_rate=0.05, batch_size=8),
                       TrainConfig(epochs=epochs, patience=patience, progress=False), task_manager=tm,
                       checkpoint_path=tmp_path / 'model.ckpt' if checkpoint else None,
                       metadata={'note': 'test'})
    return build


class _Sink:
    def __init__(self):
        self.lines = []

    def write(self, text):
        self.lines.append(text)

    def flush(self):
        pass


class TestTrainer:

    def test_fit_records_epochs_and_saves_best(self, trainer_factory, data, tmp_path):
        trainer = trainer_factory(epochs=3)
        result = trainer.fit(*data)
        assert result.stop_reason == STOP_COMPLETED
        assert [r.epoch for r in result.history] == [1, 2, 3]
        assert all(np.isfinite(r.train_nll) and np.isfinite(r.val_nll) for r in result.history)
        assert result.best_val_nll == min(r.val_nll for r in result.history)

        stored, metadata = ParamStore.load(tmp_path / 'model.ckpt')
        np.testing.assert_array_equal(stored.raw, result.store.raw)
        assert metadata['best_epoch'] == result.best_epoch
        assert metadata['note'] == 'test'
        assert [e['event'] for e in trainer.task_manager.events].count('epoch') == 3

    def test_runs_are_reproducible(self, trainer_factory, data):
        a = trainer_factory(epochs=2, checkpoint=False).fit(*data)
        b = trainer_factory(epochs=2, checkpoint=False).fit(*data)
        np.testing.assert_array_equal(a.store.raw, b.store.raw)

    def test_early_stopping(self, trainer_factory, data, monkeypatch):
        trainer = trainer_factory(epochs=10, patience=2, checkpoint=False)
        losses = iter([5.0, 4.0, 4.5, 4.6, 4.7])
        monkeypatch.setattr(trainer, 'validation_nll', lambda store, val: next(losses))
        result = trainer.fit(*data)
        assert result.stop_reason == STOP_EARLY
        assert result.best_epoch == 2
        assert len(result.history) == 4

    def test_divergence_keeps_last_good_parameters(self, trainer_factory, data, tmp_path, monkeypatch):
        trainer = trainer_factory(epochs=5)
        real_epoch = trainer.run_epoch

        def flaky(store, train, epoch):
            if epoch == 2:
                store.raw[:] = np.nan
                raise DivergenceError("gradient")
            return real_epoch(store, train, epoch)

        monkeypatch.setattr(trainer, 'run_epoch', flaky)
        result = trainer.fit(*data)
        assert result.stop_reason == STOP_DIVERGED
        assert result.best_epoch == 1
        assert np.all(np.isfinite(result.store.raw))
        assert 'diverged' in [e['event'] for e in trainer.task_manager.events]

    def test_divergence_in_first_epoch_saves_initial_parameters(self, trainer_factory, data, tmp_path,
                                                                monkeypatch):
        trainer = trainer_factory(epochs=3)

        def broken(store, train, epoch):
            raise LikelihoodError(0, DivergenceError("intensity"))

        monkeypatch.setattr(trainer, 'run_epoch', broken)
        result = trainer.fit(*data)
        assert result.stop_reason == STOP_DIVERGED
        assert result.best_epoch == 0
        stored, metadata = ParamStore.load(tmp_path / 'model.ckpt')
        np.testing.assert_array_equal(stored.raw, trainer.initial_store().raw)
        assert metadata['stop_reason'] == STOP_DIVERGED

    def test_other_failures_propagate(self, trainer_factory, data, monkeypatch):
        trainer = trainer_factory(epochs=2, checkpoint=False)

        def broken(store, train, epoch):
            raise LikelihoodError(3, KeyError('k'))

        monkeypatch.setattr(trainer, 'run_epoch', broken)
        with pytest.raises(LikelihoodError):
            trainer.fit(*data)

    def test_needs_data(self, trainer_factory, data):
        with pytest.raises(ContractViolation):
            trainer_factory(checkpoint=False).fit(data[0], [])

    def test_epoch_events_reach_the_stream(self, trainer_factory, data):
        sink = _Sink()
        trainer_factory(epochs=1, checkpoint=False, stream=sink).fit(*data)
        assert any('"event": "epoch"' in line for line in sink.lines)


class TestHelpers:

    def test_epoch_loss_variance(self):
        history = [EpochRecord(i, loss, 0.0, 0.0) for i, loss in enumerate([3.0, 1.0, 2.0, 2.0], 1)]
        assert epoch_loss_variance(history) == pytest.approx(np.var([3.0, 1.0, 2.0, 2.0]))
        assert epoch_loss_variance(history, skip=2) == 0.0
        assert epoch_loss_variance(history[:1]) == 0.0

    @pytest.mark.parametrize('kwargs', [{'epochs': 0}, {'patience': 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)
