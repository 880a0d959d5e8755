"""
Ground-truth processes, thinning and dataset generation.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from core.sequences import EventSequence, write_sequences, write_manifest
from core.supply_chain import SupplyChainConfig
from error_handling import BoundViolationError, ConfigError, ContractViolation
from utils.constants import (
    __version__, GENERATOR_PP1, GENERATOR_PP2, GENERATOR_SUPPLY_CHAIN, GENERATOR_HOMOGENEOUS,
    GENERATORS, TRAIN_FILE, VAL_FILE, MANIFEST_FILE
)
from utils.random_streams import derive_rng, SPLIT_TRAIN, SPLIT_VAL

# relative slack before a proposal counts as exceeding its bound
BOUND_TOLERANCE = 1e-9


class GroundTruthProcess:
    """
    Known multivariate intensity used to generate data and as an oracle.

    Subclasses provide intensity_grid() and upper_bound(); the bound must
    dominate the total intensity over `lookahead` time units from any point,
    given the history up to that point.
    """

    num_types: int = 1
    horizon: float = 1.0
    lookahead: float = math.inf

    def intensity_grid(self, times, events: EventSequence, strict: bool = True) -> np.ndarray:
        raise NotImplementedError

    def upper_bound(self, t: float, history: EventSequence, lookahead: float) -> float:
        raise NotImplementedError

    def kernel(self, j: int, k: int, dt) -> np.ndarray:
        """Pre-link influence of a type-j event on type k after lag dt."""
        return np.zeros_like(np.asarray(dt, dtype=np.float64))

    def intensities(self, t: float, history: EventSequence) -> np.ndarray:
        if len(history) and history.last_time >= t:
            raise ContractViolation(f"History event at t={history.last_time} is not strictly before t={t}")
        return self.intensity_grid(np.array([t]), history)[:, 0]

    def intensity(self, k: int, t: float, history: EventSequence) -> float:
        return float(self.intensities(t, history)[k])

    def sample(self, rng: np.random.Generator) -> EventSequence:
        return thinning_sample(self, rng)

    def describe(self) -> dict:
        return {'process': type(self).__name__, 'num_types': self.num_types, 'horizon': self.horizon}


class HomogeneousPoissonProcess(GroundTruthProcess):
    """Independent constant-rate streams."""

    def __init__(self, rates: Sequence[float], horizon: float):
        self.rates = np.asarray(rates, dtype=np.float64)
        if self.rates.ndim != 1 or self.rates.size == 0 or np.any(self.rates < 0):
            raise ConfigError(f"Rates must be a non-empty non-negative vector (got {rates})")
        if not horizon > 0:
            raise ConfigError(f"Horizon must be > 0 (got {horizon})")
        self.num_types = self.rates.size
        self.horizon = float(horizon)

    def intensity_grid(self, times, events, strict=True):
        times = np.asarray(times, dtype=np.float64)
        return np.repeat(self.rates[:, None], times.size, axis=1)

    def upper_bound(self, t, history, lookahead):
        return float(self.rates.sum())

    def describe(self):
        return {**super().describe(), 'rates': self.rates.tolist()}


class DelayedGaussianProcess(GroundTruthProcess):
    """
    Two types. Type 0 is a homogeneous source; each type-0 event adds a
    Gaussian bump, peaking `delay` later, to the pre-link intensity of type 1:

        pre_1(t) = target_base + amplitude * sum_i exp(-(t - t_i - delay)^2 / (2 width^2))

    With link_beta unset the intensity is pre_1 itself (amplitude must keep it
    non-negative); otherwise it is softplus with that sharpness.
    """

    num_types = 2

    def __init__(self, source_rate: float, target_base: float, amplitude: float,
                 delay: float = 1.0, width: float = 0.5, horizon: float = 50.0,
                 link_beta: Optional[float] = None, lookahead: float = 1.0):
        if link_beta is None and (amplitude < 0 or target_base < 0):
            raise ConfigError("Without a link the base and amplitude must be non-negative")
        if not (source_rate >= 0 and width > 0 and delay >= 0 and horizon > 0 and lookahead > 0):
            raise ConfigError("Invalid delayed-Gaussian process parameters")
        self.source_rate = float(source_rate)
        self.target_base = float(target_base)
        self.amplitude = float(amplitude)
        self.delay = float(delay)
        self.width = float(width)
        self.horizon = float(horizon)
        self.link_beta = link_beta
        self.lookahead = float(lookahead) if amplitude > 0 else math.inf

    def _bump(self, lag):
        return np.exp(-((lag - self.delay) ** 2) / (2.0 * self.width ** 2))

    def _link(self, x):
        if self.link_beta is None:
            return x
        return np.logaddexp(0.0, self.link_beta * x) / self.link_beta

    def kernel(self, j, k, dt):
        dt = np.asarray(dt, dtype=np.float64)
        if (j, k) != (0, 1):
            return np.zeros_like(dt)
        return np.where(dt > 0.0, self.amplitude * self._bump(dt), 0.0)

    def intensity_grid(self, times, events, strict=True):
        times = np.asarray(times, dtype=np.float64)
        sources = events.times_array[events.marks_array == 0]
        lag = times[None, :] - sources[:, None]
        active = lag > 0.0 if strict else lag >= 0.0
        excitation = np.where(active, self._bump(lag), 0.0).sum(axis=0)
        out = np.empty((2, times.size))
        out[0] = self.source_rate
        out[1] = self._link(self.target_base + self.amplitude * excitation)
        return out

    def upper_bound(self, t, history, lookahead):
        peak = self.target_base
        if self.amplitude > 0:
            sources = history.times_array[history.marks_array == 0]
            # each bump's largest value over lags [t - t_i, t + lookahead - t_i]
            low = t - sources
            high = low + lookahead
            nearest = np.clip(self.delay, low, high)
            peak += self.amplitude * float(self._bump(nearest).sum())
        return self.source_rate + float(self._link(peak))

    def describe(self):
        return {**super().describe(), 'source_rate': self.source_rate, 'target_base': self.target_base,
                'amplitude': self.amplitude, 'delay': self.delay, 'width': self.width,
                'link_beta': self.link_beta}


def pp1_process(horizon: float = 50.0) -> DelayedGaussianProcess:
    """Delayed excitation of type 1 by type 0."""
    return DelayedGaussianProcess(0.5, 0.05, 0.6, delay=1.0, width=0.5, horizon=horizon)


def pp2_process(horizon: float = 40.0) -> DelayedGaussianProcess:
    """Delayed inhibition of type 1 by type 0 behind a sharp softplus."""
    return DelayedGaussianProcess(0.5, 1.0, -1.5, delay=1.0, width=0.5, horizon=horizon, link_beta=10.0)


def homogeneous_process(rate: float = 0.5, horizon: float = 50.0, num_types: int = 1) -> HomogeneousPoissonProcess:
    return HomogeneousPoissonProcess([rate] * num_types, horizon)


def thinning_sample(process: GroundTruthProcess, rng: np.random.Generator) -> EventSequence:
    """
    Draw one sequence by thinning.

    Candidates come from a homogeneous stream at the current bound; a candidate
    beyond the bound's lookahead window only moves time forward. Accepted
    candidates take a mark in proportion to the type intensities.
    """
    T = process.horizon
    times, marks = [], []
    history = EventSequence((), (), T, validate=False)
    t = 0.0
    while t < T:
        window = process.lookahead
        bound = process.upper_bound(t, history, window)
        if bound <= 0.0:
            if math.isinf(window):
                break
            t += window
            continue
        tau = rng.exponential(1.0 / bound)
        if tau > window:
            t += window
            continue
        t += tau
        if t >= T:
            break
        lam = process.intensities(t, history)
        total = float(lam.sum())
        if total > bound * (1.0 + BOUND_TOLERANCE):
            raise BoundViolationError(t, total, bound)
        if rng.random() * bound < total:
            k = int(np.searchsorted(np.cumsum(lam), rng.random() * total, side='right'))
            times.append(t)
            marks.append(min(k, lam.size - 1))
            history = EventSequence(times, marks, T, validate=False)
    return EventSequence(times, marks, T, num_types=process.num_types)


# ==================== DATASETS ====================

def build_source(generator: str, settings: Optional[dict] = None):
    """Process (or simulator config) for a generator name and its 'simulate' settings."""
    settings = settings or {}
    if generator == GENERATOR_PP1:
        return pp1_process(settings.get('horizon') or 50.0)
    if generator == GENERATOR_PP2:
        return pp2_process(settings.get('horizon') or 40.0)
    if generator == GENERATOR_HOMOGENEOUS:
        return homogeneous_process(settings.get('rate', 0.5), settings.get('horizon') or 50.0,
                                   settings.get('num_types', 1))
    if generator == GENERATOR_SUPPLY_CHAIN:
        keys = SupplyChainConfig.__dataclass_fields__.keys()
        return SupplyChainConfig(**{k: v for k, v in settings.items() if k in keys and v is not None})
    raise ConfigError(f"Unknown generator '{generator}'", suggestion=f"Use one of: {', '.join(GENERATORS)}")


@dataclass
class DatasetPaths:
    train: Path
    val: Path
    manifest: Path


def _sample_job(job):
    source, rng = job
    return source.sample(rng)


def sample_sequences(source, count: int, seed: int, split: int, task_manager=None):
    """Sequence i uses the stream (seed, split, i), so output is independent of worker count."""
    jobs = [(source, derive_rng(seed, split, i)) for i in range(count)]
    if task_manager is not None:
        return task_manager.map(_sample_job, jobs)
    return [_sample_job(job) for job in jobs]


def generate_dataset(source, n_train: int, n_val: int, seed: int, out_dir,
                     generator: str = "", task_manager=None, extra: Optional[dict] = None) -> DatasetPaths:
    """Write train/val JSONL files and a manifest; identical inputs give identical files."""
    if n_train < 1 or n_val < 1:
        raise ContractViolation(f"Need n_train, n_val >= 1 (got {n_train}, {n_val})")
    out_dir = Path(out_dir)
    logging.info(f"Generating {n_train} train / {n_val} validation sequences ({generator or 'custom'}, seed {seed})")

    train = sample_sequences(source, n_train, seed, SPLIT_TRAIN, task_manager)
    val = sample_sequences(source, n_val, seed, SPLIT_VAL, task_manager)

    paths = DatasetPaths(out_dir / TRAIN_FILE, out_dir / VAL_FILE, out_dir / MANIFEST_FILE)
    write_sequences(paths.train, train)
    write_sequences(paths.val, val)
    write_manifest(paths.manifest, {
        'num_types': source.num_types,
        'generator': generator,
        'config': source.describe(),
        'seed': seed,
        'n_train': n_train,
        'n_val': n_val,
        'version': __version__,
        **(extra or {}),
    })
    n_events = sum(len(s) for s in train)
    logging.info(f"Dataset written to {out_dir} ({n_events} training events)")
    return paths
