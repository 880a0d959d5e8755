"""AdamW with decoupled weight decay over a ParamStore."""

import logging
from dataclasses import dataclass, asdict

import numpy as np

from error_handling import ConfigError, DivergenceError, StructuralError
from utils.constants import (
    DEFAULT_LEARNING_RATE, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON,
    DEFAULT_WEIGHT_DECAY, SYNTHETIC_BATCH_SIZE
)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = DEFAULT_EPSILON
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = SYNTHETIC_BATCH_SIZE

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0 (got {self.learning_rate})")
        for name in ('beta1', 'beta2'):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1) (got {value})")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0 (got {self.epsilon})")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0 (got {self.weight_decay})")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1 (got {self.batch_size})")

    def to_dict(self) -> dict:
        return asdict(self)


def adamw_step(store, gradient, config: OptimizerConfig):
    """
    Apply one AdamW update in place and return the store.

    The step is rejected before any state changes when a gradient component is
    not finite.
    """
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != store.raw.shape:
        raise StructuralError(f"Gradient shape {gradient.shape} does not match parameters {store.raw.shape}")
    if not np.all(np.isfinite(gradient)):
        bad = int(np.count_nonzero(~np.isfinite(gradient)))
        logging.error(f"Rejecting optimizer step: {bad} non-finite gradient components")
        raise DivergenceError("gradient")

    store.step_count += 1
    t = store.step_count
    b1, b2 = config.beta1, config.beta2

    store.first_moment *= b1
    store.first_moment += (1.0 - b1) * gradient
    store.second_moment *= b2
    store.second_moment += (1.0 - b2) * gradient * gradient

    m_hat = store.first_moment / (1.0 - b1 ** t)
    v_hat = store.second_moment / (1.0 - b2 ** t)

    # decoupled decay acts on the parameters, not the gradient
    store.raw *= 1.0 - config.learning_rate * config.weight_decay
    store.raw -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return store
