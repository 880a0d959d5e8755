"""Tests for next-event prediction and evaluation metrics."""

import csv
import json
import math

import numpy as np
import pytest

from core.model import ConstantIntensityModel
from core.predict import (
    PredictConfig, PredictionRecord, EvalReport, evaluate, expected_next_time, paired_bootstrap_ci,
    predict_type, write_eval_json, write_predictions_csv
)
from core.sequences import EventSequence
from core.simulate import homogeneous_process, pp1_process, sample_sequences
from error_handling import ConfigError, ContractViolation, PredictionError
from utils.constants import TYPE_AT_TRUE


class _NaNModel:
    num_types = 1

    def intensity_grid(self, times, events, strict=True):
        return np.full((1, np.asarray(times).size), np.nan)


class TestExpectedTime:

    def test_unit_rate_truncated_at_ten(self):
        model = ConstantIntensityModel([1.0])
        config = PredictConfig(truncation_multiplier=10.0, mean_gap=1.0)
        t_hat = expected_next_time(EventSequence([], [], horizon=100.0), model, config)
        assert t_hat == pytest.approx(1.0 - math.exp(-10.0), abs=1e-3)

    def test_offset_by_last_event(self):
        model = ConstantIntensityModel([0.3, 0.2])
        config = PredictConfig(truncation_multiplier=10.0, mean_gap=2.0)
        history = EventSequence([1.0, 4.5], [0, 1], horizon=100.0)
        expected = 4.5 + (1.0 - math.exp(-0.5 * 20.0)) / 0.5
        assert expected_next_time(history, model, config) == pytest.approx(expected, abs=1e-2)

    def test_shorter_horizon_truncates_more(self):
        model = ConstantIntensityModel([0.1])
        empty = EventSequence([], [], horizon=100.0)
        short = expected_next_time(empty, model, PredictConfig(truncation_multiplier=5.0, mean_gap=1.0))
        long = expected_next_time(empty, model, PredictConfig(truncation_multiplier=10.0, mean_gap=1.0))
        assert short < long < 10.0

    def test_needs_mean_gap(self):
        with pytest.raises(ContractViolation):
            expected_next_time(EventSequence([], [], 1.0), ConstantIntensityModel([1.0]), PredictConfig())

    def test_non_finite_intensity(self):
        with pytest.raises(PredictionError):
            expected_next_time(EventSequence([], [], 1.0), _NaNModel(), PredictConfig(mean_gap=1.0))

    def test_excitation_shortens_wait(self):
        """An excitatory event at the last time shortens the expected wait."""
        process = pp1_process()
        history = EventSequence([2.0], [0], horizon=50.0)
        config = PredictConfig(mean_gap=1.0, inner_points=512, outer_points=512)
        with_source = expected_next_time(history, process, config)
        quiet = expected_next_time(EventSequence([2.0], [1], horizon=50.0), process, config)
        assert with_source < quiet

    @pytest.mark.parametrize('which', ['process', 'model'])
    def test_grid_refinement_is_stable(self, which, small_model):
        model = pp1_process() if which == 'process' else small_model
        history = EventSequence([0.4, 1.1, 1.3, 2.7, 3.05], [0, 1, 0, 0, 1], horizon=50.0)
        coarse = PredictConfig(mean_gap=1.5)
        fine = PredictConfig(mean_gap=1.5, inner_points=2 * coarse.inner_points,
                             outer_points=2 * coarse.outer_points)
        a = expected_next_time(history, model, coarse)
        b = expected_next_time(history, model, fine)
        assert abs(a - b) < 1e-3 * b


class TestPredictType:

    def test_argmax(self):
        model = ConstantIntensityModel([0.2, 0.9, 0.4])
        assert predict_type(EventSequence([], [], 1.0), 0.5, model) == 1

    def test_single_type(self):
        assert predict_type(EventSequence([], [], 1.0), 0.5, ConstantIntensityModel([0.2])) == 0

    def test_ties_go_to_smallest_mark(self):
        model = ConstantIntensityModel([0.5, 0.5])
        assert predict_type(EventSequence([], [], 1.0), 0.5, model) == 0

    def test_time_must_follow_history(self):
        with pytest.raises(ContractViolation):
            predict_type(EventSequence([0.5], [0], 1.0), 0.5, ConstantIntensityModel([1.0]))

    def test_follows_excitation(self):
        process = pp1_process()
        assert predict_type(EventSequence([], [], 50.0), 1.0, process) == 0
        assert predict_type(EventSequence([0.0, 0.1, 0.2], [0, 0, 0], 50.0), 1.15, process) == 1


class TestEvaluate:

    def test_exponential_gaps_rmse(self):
        """Predicting Exp(0.5) gaps by their mean leaves a residual spread of 1/0.5."""
        process = homogeneous_process(rate=0.5, horizon=50.0)
        seqs = sample_sequences(process, 400, seed=12, split=0)
        model = ConstantIntensityModel.fit(seqs, 1)
        report = evaluate(seqs, model, PredictConfig(truncation_multiplier=10.0, mean_gap=2.0))
        assert report.n_events > 9000
        assert report.time_rmse == pytest.approx(2.0, rel=0.08)
        assert report.type_error_rate == 0.0

    def test_counts_and_skips(self):
        seqs = [EventSequence([0.5, 1.0], [0, 1], 3.0), EventSequence([], [], 3.0)]
        report = evaluate(seqs, ConstantIntensityModel([1.0, 2.0]), PredictConfig(mean_gap=1.0))
        assert report.n_events == 2
        assert report.skipped_sequences == 1
        assert [r.idx for r in report.records] == [0, 1]
        assert report.type_error_rate == 0.5

    def test_type_at_true_time(self):
        seqs = [EventSequence([0.5, 1.0], [1, 1], 3.0)]
        config = PredictConfig(mean_gap=1.0, type_at=TYPE_AT_TRUE)
        report = evaluate(seqs, ConstantIntensityModel([1.0, 2.0]), config)
        assert report.type_error_rate == 0.0

    def test_nothing_to_evaluate(self):
        with pytest.raises(ContractViolation):
            evaluate([EventSequence([], [], 1.0)], ConstantIntensityModel([1.0]), PredictConfig(mean_gap=1.0))
        with pytest.raises(ContractViolation):
            evaluate([], ConstantIntensityModel([1.0]), PredictConfig(mean_gap=1.0))

    def test_perfect_records_score_zero(self):
        records = [PredictionRecord(0, i, float(i), float(i), 1, 1) for i in range(3)]
        report = EvalReport(0.0, 0.0, 3, records=records)
        assert not report.squared_errors().any()
        assert not report.type_errors().any()

    @pytest.mark.parametrize('kwargs', [
        {'truncation_multiplier': 0.0},
        {'inner_points': 1},
        {'type_at': 'later'},
        {'mean_gap': -1.0},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            PredictConfig(**kwargs)


class TestBootstrap:

    def test_clear_difference_excludes_zero(self):
        rng = np.random.default_rng(0)
        a = rng.normal(1.0, 0.1, 200)
        b = a - 0.5 + rng.normal(0.0, 0.05, 200)
        interval = paired_bootstrap_ci(a, b, n_boot=500)
        assert interval.mean == pytest.approx(0.5, abs=0.02)
        assert interval.low < interval.mean < interval.high
        assert interval.excludes_zero

    def test_identical_inputs(self):
        a = np.linspace(0.0, 1.0, 50)
        interval = paired_bootstrap_ci(a, a, n_boot=200)
        assert (interval.low, interval.high) == (0.0, 0.0)
        assert not interval.excludes_zero

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            paired_bootstrap_ci([1.0, 2.0], [1.0])


class TestWriters:

    def test_json_and_csv(self, tmp_path):
        seqs = [EventSequence([0.5, 1.0], [0, 1], 3.0)]
        report = evaluate(seqs, ConstantIntensityModel([1.0, 2.0]), PredictConfig(mean_gap=1.0))
        data = json.loads(write_eval_json(report, tmp_path / 'eval.json', {'h': 10}, {'nll': 1.5}).read_text())
        assert data['n_events'] == 2 and data['config'] == {'h': 10} and data['nll'] == 1.5
        with open(write_predictions_csv(report.records, tmp_path / 'pred.csv'), newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['seq', 'idx', 't_true', 't_pred', 'k_true', 'k_pred']
        assert len(rows) == 3
