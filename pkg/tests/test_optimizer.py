"""Tests for the AdamW update."""

import math

import numpy as np
import pytest

from core.optimizer import OptimizerConfig, adamw_step
from core.param_store import ParamLayout, ParamStore
from error_handling import ConfigError, DivergenceError, StructuralError


def quadratic_store(value):
    """Store whose first raw entry is the scalar being optimised."""
    store = ParamStore(ParamLayout(1, 1, (1,), (1,)))
    store.raw[0] = value
    return store


class TestAdamW:

    def test_step_reduces_magnitude_on_square(self):
        store = quadratic_store(1.0)
        grad = np.zeros(store.size)
        grad[0] = 2.0
        adamw_step(store, grad, OptimizerConfig())
        assert abs(store.raw[0]) < 1.0

    def test_one_step_descends(self):
        store = quadratic_store(1.0)
        grad = np.zeros(store.size)
        grad[0] = 2.0 * (1.0 - 2.0)
        adamw_step(store, grad, OptimizerConfig(learning_rate=0.1, weight_decay=0.0))
        # the first bias-corrected step has magnitude lr
        assert store.raw[0] == pytest.approx(1.1, abs=1e-6)

    def test_zero_gradient_is_fixed_point(self):
        store = quadratic_store(0.7)
        before = store.raw.copy()
        for _ in range(5):
            adamw_step(store, np.zeros(store.size), OptimizerConfig(weight_decay=0.0))
        np.testing.assert_array_equal(store.raw, before)
        assert store.step_count == 5

    def test_converges_on_quadratic(self):
        store = quadratic_store(1.0)
        config = OptimizerConfig(learning_rate=0.1, weight_decay=0.0)
        for _ in range(200):
            grad = np.zeros(store.size)
            grad[0] = 2.0 * (store.raw[0] - 2.0)
            adamw_step(store, grad, config)
        assert abs(store.raw[0] - 2.0) < 1e-2

    def test_hand_trace_without_momentum(self):
        """With beta1 = beta2 = 0 each step is lr * g / (|g| + eps) after decay."""
        store = quadratic_store(3.0)
        config = OptimizerConfig(learning_rate=0.5, beta1=0.0, beta2=0.0, epsilon=1e-8, weight_decay=0.1)
        grad = np.zeros(store.size)
        grad[0] = 4.0
        adamw_step(store, grad, config)
        expected = 3.0 * (1.0 - 0.5 * 0.1) - 0.5 * 4.0 / (4.0 + 1e-8)
        assert store.raw[0] == pytest.approx(expected, rel=1e-12)

    def test_weight_decay_shrinks_parameters(self):
        store = quadratic_store(2.0)
        adamw_step(store, np.zeros(store.size), OptimizerConfig(learning_rate=0.1, weight_decay=0.5))
        assert store.raw[0] == pytest.approx(2.0 * 0.95)

    @pytest.mark.parametrize('bad', [math.nan, math.inf, -math.inf])
    def test_non_finite_gradient_rejected(self, bad):
        store = quadratic_store(1.0)
        grad = np.zeros(store.size)
        grad[0] = bad
        before = store.raw.copy()
        with pytest.raises(DivergenceError):
            adamw_step(store, grad, OptimizerConfig())
        np.testing.assert_array_equal(store.raw, before)
        assert store.step_count == 0
        assert not store.first_moment.any()

    def test_shape_mismatch(self):
        store = quadratic_store(1.0)
        with pytest.raises(StructuralError):
            adamw_step(store, np.zeros(store.size + 2), OptimizerConfig())


class TestOptimizerConfig:

    @pytest.mark.parametrize('kwargs', [
        {'learning_rate': 0.0},
        {'beta1': 1.0},
        {'beta2': -0.1},
        {'epsilon': 0.0},
        {'weight_decay': -1e-3},
        {'batch_size': 0},
    ])
    def test_invalid_values(self, kwargs):
        with pytest.raises(ConfigError):
            OptimizerConfig(**kwargs)
