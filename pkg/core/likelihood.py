"""
Sequence negative log-likelihood with Monte Carlo integral estimators.

NLL = -( sum_n log lambda_{k_n}(t_n) - sum_k integral_0^T lambda_k(t) dt )

The integral is estimated per inter-event interval by stratified sampling (one
uniform draw in each of Q equal segments), or over the whole horizon by a single
draw (global estimator, kept for comparison). Event terms see the history
strictly before the event; interval samples see every event at or before the
interval start.
"""

import logging
import math
from dataclasses import dataclass, asdict, field
from typing import List, Optional, Sequence

import numpy as np

from core.diffcore import Tape, Var, log as dlog, value_of
from core.model import InfluenceModel, ModelSpec, apply_link, link_derivative
from core.param_store import ParamStore
from core.sequences import EventSequence
from error_handling import ConfigError, ContractViolation, DivergenceError, LikelihoodError
from utils.constants import (
    DEFAULT_SEGMENTS, ESTIMATOR_STRATIFIED, ESTIMATOR_GMCE, ESTIMATORS, INTENSITY_FLOOR,
    ENGINE_VECTORIZED, ENGINE_TAPE, ENGINES
)
from utils.random_streams import derive_rng

LOG_FLOOR = math.log(INTENSITY_FLOOR)


@dataclass(frozen=True)
class NLLConfig:
    segments: int = DEFAULT_SEGMENTS
    estimator: str = ESTIMATOR_STRATIFIED
    seed: int = 0
    engine: str = ENGINE_VECTORIZED

    def __post_init__(self):
        if self.segments < 1:
            raise ConfigError(f"segments must be >= 1 (got {self.segments})")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"Unknown estimator '{self.estimator}'",
                              suggestion=f"Use one of: {', '.join(ESTIMATORS)}")
        if self.engine not in ENGINES:
            raise ConfigError(f"Unknown gradient engine '{self.engine}'",
                              suggestion=f"Use one of: {', '.join(ENGINES)}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossReport:
    """total_nll = -(event_term - integral_term)."""
    total_nll: float
    event_term: float
    integral_term: float
    per_sequence: List[float] = field(default_factory=list)
    n_events: int = 0
    floored_events: int = 0

    @classmethod
    def from_terms(cls, event_term: float, integral_term: float, n_events: int,
                   floored_events: int = 0) -> 'LossReport':
        total = integral_term - event_term
        return cls(total, event_term, integral_term, [total], n_events, floored_events)

    @classmethod
    def mean_of(cls, reports: Sequence['LossReport']) -> 'LossReport':
        if not reports:
            raise ContractViolation("Cannot average an empty list of loss reports")
        n = len(reports)
        return cls(
            total_nll=sum(r.total_nll for r in reports) / n,
            event_term=sum(r.event_term for r in reports) / n,
            integral_term=sum(r.integral_term for r in reports) / n,
            per_sequence=[r.total_nll for r in reports],
            n_events=sum(r.n_events for r in reports),
            floored_events=sum(r.floored_events for r in reports),
        )

    def to_dict(self) -> dict:
        return asdict(self)


# ==================== INTEGRAL ESTIMATORS ====================

def stratified_times(t_start: float, t_end: float, segments: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw inside each of `segments` equal pieces of (t_start, t_end]."""
    width = (t_end - t_start) / segments
    u = 1.0 - rng.random(segments)
    return np.minimum(t_start + (np.arange(segments) + u) * width, t_end)


def stratified_integral(intensity_fn, t_start: float, t_end: float, segments: int,
                        rng: np.random.Generator) -> float:
    """
    Stratified estimate (L/Q) * sum_q lambda(t_q) of the integral over [t_start, t_end].

    intensity_fn maps an array of times to an array of intensities. A degenerate
    interval contributes 0.
    """
    if segments < 1:
        raise ContractViolation(f"segments must be >= 1 (got {segments})")
    if t_end <= t_start:
        return 0.0
    times = stratified_times(t_start, t_end, segments, rng)
    return float((t_end - t_start) / segments * np.sum(intensity_fn(times)))


def uniform_mc_integral(intensity_fn, t_start: float, t_end: float, samples: int,
                        rng: np.random.Generator) -> float:
    """Plain Monte Carlo estimate with `samples` i.i.d. uniform draws."""
    if samples < 1:
        raise ContractViolation(f"samples must be >= 1 (got {samples})")
    if t_end <= t_start:
        return 0.0
    times = t_start + (1.0 - rng.random(samples)) * (t_end - t_start)
    return float((t_end - t_start) * np.mean(intensity_fn(times)))


@dataclass
class SampleGrid:
    """Integral sample times with their weights."""
    times: np.ndarray
    weights: np.ndarray
    # (N+1, Q) per-interval draws for the stratified estimator; (1, 1) for the global one
    per_interval: np.ndarray


def draw_samples(seq: EventSequence, config: NLLConfig, rng: np.random.Generator) -> SampleGrid:
    """Draw every integral sample of one sequence up front, skipping degenerate intervals."""
    if config.estimator == ESTIMATOR_GMCE:
        t_hat = seq.horizon * (1.0 - rng.random())
        return SampleGrid(np.array([t_hat]), np.array([seq.horizon]), np.array([[t_hat]]))

    Q = config.segments
    bounds = np.concatenate(([0.0], seq.times_array, [seq.horizon]))
    starts, ends = bounds[:-1], bounds[1:]
    widths = ends - starts
    u = 1.0 - rng.random((widths.size, Q))
    per_interval = np.minimum(starts[:, None] + (np.arange(Q)[None, :] + u) * (widths[:, None] / Q),
                              ends[:, None])
    valid = widths > 0.0
    times = per_interval[valid].ravel()
    weights = np.repeat(widths[valid] / Q, Q)
    return SampleGrid(times, weights, per_interval)


# ==================== FLOAT NLL (ANY INTENSITY MODEL) ====================

def sequence_nll(seq: EventSequence, model, config: NLLConfig, rng: np.random.Generator) -> LossReport:
    """
    NLL of one sequence under any model exposing intensity_grid(times, events).

    Works for trained models, ground-truth processes and constant baselines.
    """
    samples = draw_samples(seq, config, rng)
    integral = 0.0
    if samples.times.size:
        lam = model.intensity_grid(samples.times, seq)
        integral = float(samples.weights @ lam.sum(axis=0))

    event_term, floored = 0.0, 0
    if len(seq):
        lam_events = model.intensity_grid(seq.times_array, seq)[seq.marks_array, np.arange(len(seq))]
        if not np.all(np.isfinite(lam_events)):
            raise DivergenceError("intensity")
        low = lam_events < INTENSITY_FLOOR
        floored = int(np.count_nonzero(low))
        event_term = float(np.log(np.maximum(lam_events, INTENSITY_FLOOR)).sum())
        if floored:
            logging.debug(f"{floored} event intensities floored at {INTENSITY_FLOOR}")

    if not math.isfinite(integral):
        raise DivergenceError("integral estimate")
    return LossReport.from_terms(event_term, integral, len(seq), floored)


def gmce_nll(seq: EventSequence, model, rng: np.random.Generator) -> LossReport:
    """NLL with the whole-horizon integral estimated as T * sum_k lambda_k(t_hat)."""
    return sequence_nll(seq, model, NLLConfig(estimator=ESTIMATOR_GMCE), rng)


# ==================== GRADIENTS ====================

def sequence_loss_and_grad(seq: EventSequence, store: ParamStore, spec: ModelSpec,
                           config: NLLConfig, rng: np.random.Generator):
    """
    NLL of one sequence and its gradient over the raw parameter vector.

    Returns:
        (LossReport, gradient ndarray)
    """
    samples = draw_samples(seq, config, rng)
    if config.engine == ENGINE_TAPE:
        return _tape_loss_and_grad(seq, store, spec, samples, config)
    return _vectorized_loss_and_grad(seq, store, spec, samples)


def _vectorized_loss_and_grad(seq, store, spec, samples):
    tape = Tape()
    model = InfluenceModel.from_store(store, spec, tape)
    arrays = model.arrays()
    N = len(seq)
    S = samples.times.size
    points = np.concatenate((samples.times, seq.times_array))

    pre, caches = arrays.forward(points, seq, strict=True, keep=True)
    lam = apply_link(pre, spec)
    if not np.all(np.isfinite(lam)):
        raise DivergenceError("intensity")

    # d(loss)/d(lambda)
    d_lam = np.zeros_like(lam)
    d_lam[:, :S] = samples.weights[None, :]
    integral = float((lam[:, :S] * d_lam[:, :S]).sum())

    event_term, floored = 0.0, 0
    if N:
        cols = S + np.arange(N)
        marks = seq.marks_array
        lam_events = lam[marks, cols]
        ok = lam_events >= INTENSITY_FLOOR
        floored = int(N - np.count_nonzero(ok))
        event_term = float(np.log(np.maximum(lam_events, INTENSITY_FLOOR)).sum())
        d_lam[marks[ok], cols[ok]] -= 1.0 / lam_events[ok]

    adjoints = arrays.backward(caches, d_lam * link_derivative(pre, spec))
    model.push_adjoints(tape, adjoints)
    gradient = tape.backward()
    return LossReport.from_terms(event_term, integral, N, floored), gradient


def _event_log(model, seq, n):
    """(log-intensity of event n, floored?) with the history strictly before it."""
    t, k = seq.times[n], seq.marks[n]
    lam = model.intensity(k, t, seq.prefix(seq.count_before(t)))
    if value_of(lam) < INTENSITY_FLOOR:
        return LOG_FLOOR, True
    return dlog(lam), False


def _chunks(model, seq, samples, config):
    """
    Loss pieces as (event log-intensity or None, integral estimate), one per
    interval (stratified) or one per event plus the horizon term (global).
    """
    N = len(seq)
    T = seq.horizon
    if config.estimator == ESTIMATOR_GMCE:
        t_hat = float(samples.per_interval[0, 0])
        integral = 0.0
        for lam in model.intensities(t_hat, seq.history_before(t_hat)):
            integral = integral + lam
        yield None, integral * T
        for n in range(N):
            yield _event_log(model, seq, n), 0.0
        return

    Q = config.segments
    bounds = (0.0,) + seq.times + (T,)
    for n in range(N + 1):
        integral = 0.0
        width = bounds[n + 1] - bounds[n]
        if width > 0.0:
            history = seq.prefix(n)
            for t in samples.per_interval[n].tolist():
                for lam in model.intensities(t, history):
                    integral = integral + lam
            integral = integral * (width / Q)
        yield (_event_log(model, seq, n) if n < N else None), integral


def _tape_loss_and_grad(seq, store, spec, samples, config):
    """Scalar-tape reference: each chunk is folded into the parameters as soon as it is built."""
    tape = Tape()
    model = InfluenceModel.from_store(store, spec, tape)
    start = tape.checkpoint()
    event_term, integral_term, floored = 0.0, 0.0, 0
    for event, integral in _chunks(model, seq, samples, config):
        loss = integral
        if event is not None:
            log_lam, was_floored = event
            floored += was_floored
            event_term += value_of(log_lam)
            loss = loss - log_lam
        integral_term += value_of(integral)
        if isinstance(loss, Var):
            tape.fold(loss, start)
    if not (math.isfinite(event_term) and math.isfinite(integral_term)):
        raise DivergenceError("loss")
    gradient = tape.backward()
    return LossReport.from_terms(event_term, integral_term, len(seq), floored), gradient


@dataclass
class BatchLoss:
    mean_nll: float
    gradient: np.ndarray
    report: LossReport

    def __iter__(self):
        # unpacks as (mean_nll, gradient)
        return iter((self.mean_nll, self.gradient))


def _sequence_job(job):
    index, seq, raw, spec, config, rng = job
    try:
        store = ParamStore(spec.layout(), raw)
        return sequence_loss_and_grad(seq, store, spec, config, rng)
    except Exception as e:
        raise LikelihoodError(index, e) from e


def batch_loss_and_grad(batch: Sequence[EventSequence], store: ParamStore, spec: ModelSpec,
                        config: NLLConfig, rngs: Optional[Sequence[np.random.Generator]] = None,
                        task_manager=None) -> BatchLoss:
    """
    Mean NLL over a mini-batch and its gradient.

    Each sequence gets its own generator (derived from config.seed and the batch
    position unless given); per-sequence results are reduced in batch order.
    """
    batch = list(batch)
    if not batch:
        raise ContractViolation("Mini-batch must contain at least one sequence")
    if rngs is None:
        rngs = [derive_rng(config.seed, i) for i in range(len(batch))]
    jobs = [(i, seq, store.raw, spec, config, rng) for i, (seq, rng) in enumerate(zip(batch, rngs))]
    if task_manager is not None:
        results = task_manager.map(_sequence_job, jobs)
    else:
        results = [_sequence_job(job) for job in jobs]

    gradient = np.zeros(store.size)
    for _, grad in results:
        gradient += grad
    gradient /= len(batch)
    report = LossReport.mean_of([r for r, _ in results])
    if not math.isfinite(report.total_nll):
        raise DivergenceError("loss")
    return BatchLoss(report.total_nll, gradient, report)


def dataset_nll(sequences: Sequence[EventSequence], model, config: NLLConfig,
                stream: int, task_manager=None) -> LossReport:
    """Mean NLL over a dataset with one fixed generator per sequence."""
    jobs = [(seq, model, config, derive_rng(config.seed, stream, i)) for i, seq in enumerate(sequences)]
    if task_manager is not None:
        reports = task_manager.map(_nll_job, jobs)
    else:
        reports = [_nll_job(job) for job in jobs]
    return LossReport.mean_of(reports)


def _nll_job(job):
    seq, model, config, rng = job
    return sequence_nll(seq, model, config, rng)
