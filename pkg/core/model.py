"""
Neural influence-kernel intensity model.

Each event type k has an embedding e_k and a baseline alpha_k. A past event of
type j at time t_i shifts the pre-link intensity of type k at time t by

    f_{j->k}(t - t_i) = psi(e_j, e_k) * phi(e_j, e_k, |t - t_i - d_{jk}|)

where psi is a signed GELU network and phi is a monotone non-increasing network
in its time input, soft-clipped into [0, 1]. The intensity is
link(alpha_k + sum of f over earlier events).
"""

import csv
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from core import diffcore as dm
from core.diffcore import Var
from core.param_store import ParamLayout, ParamStore, ParamView
from core.sequences import EventSequence
from error_handling import ConfigError, ContractViolation
from utils.constants import (
    DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN, DEFAULT_SMOOTHNESS, CLIP_LOWER, CLIP_UPPER,
    DEFAULT_SOFTPLUS_BETA, LINK_SOFTPLUS, LINK_ELU_PLUS_ONE, LINKS,
    KERNEL_GRID_POINTS, KERNEL_GRID_SPAN
)


@dataclass(frozen=True)
class ModelSpec:
    num_types: int
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    psi_hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    phi_hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    smoothness: float = DEFAULT_SMOOTHNESS
    clip_bounds: Tuple[float, float] = (CLIP_LOWER, CLIP_UPPER)
    link: str = LINK_SOFTPLUS
    softplus_beta: float = DEFAULT_SOFTPLUS_BETA

    def __post_init__(self):
        object.__setattr__(self, 'psi_hidden', tuple(int(h) for h in self.psi_hidden))
        object.__setattr__(self, 'phi_hidden', tuple(int(h) for h in self.phi_hidden))
        object.__setattr__(self, 'clip_bounds', tuple(float(b) for b in self.clip_bounds))
        if self.num_types < 1:
            raise ConfigError(f"num_types must be >= 1 (got {self.num_types})")
        if self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1 (got {self.embedding_dim})")
        if not self.psi_hidden or not self.phi_hidden:
            raise ConfigError("psi and phi need at least one hidden layer")
        if any(h < 1 for h in self.psi_hidden + self.phi_hidden):
            raise ConfigError("hidden layer sizes must be >= 1")
        if not self.smoothness > 0:
            raise ConfigError(f"smoothness must be > 0 (got {self.smoothness})")
        a, b = self.clip_bounds
        if not a < b:
            raise ConfigError(f"clip bounds need a < b (got {self.clip_bounds})")
        if self.link not in LINKS:
            raise ConfigError(f"Unknown link '{self.link}'", suggestion=f"Use one of: {', '.join(LINKS)}")
        if not self.softplus_beta > 0:
            raise ConfigError(f"softplus_beta must be > 0 (got {self.softplus_beta})")

    def layout(self) -> ParamLayout:
        return ParamLayout(self.num_types, self.embedding_dim, self.psi_hidden, self.phi_hidden)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['psi_hidden'] = list(self.psi_hidden)
        data['phi_hidden'] = list(self.phi_hidden)
        data['clip_bounds'] = list(self.clip_bounds)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ModelSpec':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# ==================== ELEMENTARY PIECES ====================

def soft_clip(x, a: float, b: float, s: float):
    """
    Smooth clip of x into (a, b): a + s*log(1+e^((x-a)/s)) - s*log(1+e^((x-b)/s)).

    Stays within s*log(2) of min(max(x, a), b) and converges to it as s -> 0.
    """
    if not s > 0 or not a < b:
        raise ContractViolation(f"soft_clip needs s > 0 and a < b (got s={s}, a={a}, b={b})")
    beta = 1.0 / s
    if isinstance(x, Var):
        v = x.value
        value = a + dm.softplus(v - a, beta) - dm.softplus(v - b, beta)
        grad = dm.sigmoid((v - a) * beta) - dm.sigmoid((v - b) * beta)
        return dm.unary('soft_clip', x, value, grad)
    return a + dm.softplus(x - a, beta) - dm.softplus(x - b, beta)


def hard_clip(x, a: float, b: float):
    if isinstance(x, np.ndarray):
        return np.clip(x, a, b)
    return min(max(x, a), b)


def apply_link(x, spec: ModelSpec):
    if spec.link == LINK_ELU_PLUS_ONE:
        return dm.elu_plus_one(x)
    return dm.softplus(x, spec.softplus_beta)


def link_inverse(y: float, spec: ModelSpec) -> float:
    """Pre-link value producing intensity y > 0."""
    if not y > 0:
        raise ContractViolation(f"link inverse needs a positive intensity (got {y})")
    if spec.link == LINK_ELU_PLUS_ONE:
        return y - 1.0 if y > 1.0 else math.log(y)
    return dm.softplus_inverse(y, spec.softplus_beta)


def _dense(rows, biases, inputs):
    out = []
    for weights, bias in zip(rows, biases):
        acc = bias
        for w, x in zip(weights, inputs):
            acc = acc + w * x
        out.append(acc)
    return out


def psi(view: ParamView, e_src, e_tgt):
    """Signed interaction strength for the ordered pair (src, tgt)."""
    h = list(e_src) + list(e_tgt)
    *hidden, head = view.psi_layers
    for rows, biases in hidden:
        h = [dm.gelu(z) for z in _dense(rows, biases, h)]
    return _dense(head[0], head[1], h)[0]


def _phi_tail(view: ParamView, spec: ModelSpec, h):
    """Layers after the first hidden layer, then the soft clip."""
    a, b = spec.clip_bounds
    *hidden, head = view.phi_layers[1:]
    for rows, biases in hidden:
        h = [dm.softplus(z) for z in _dense(rows, biases, h)]
    raw = _dense(head[0], head[1], h)[0]
    return soft_clip(raw, a, b, spec.smoothness)


def phi(view: ParamView, spec: ModelSpec, e_src, e_tgt, u):
    """Temporal profile in ~[0, 1], non-increasing in the shifted lag u >= 0."""
    inputs = list(e_src) + list(e_tgt) + [-u]
    rows, biases = view.phi_layers[0]
    h = [dm.softplus(z) for z in _dense(rows, biases, inputs)]
    return _phi_tail(view, spec, h)


def influence(view: ParamView, spec: ModelSpec, k_src: int, k_tgt: int, dt):
    """Signed contribution of a type-k_src event to type k_tgt after lag dt."""
    e_src, e_tgt = view.embeddings[k_src], view.embeddings[k_tgt]
    u = dm.absolute(dt - view.delays[k_src][k_tgt])
    return psi(view, e_src, e_tgt) * phi(view, spec, e_src, e_tgt, u)


def intensity(k: int, t: float, history: EventSequence, view: ParamView, spec: ModelSpec):
    """Conditional intensity of type k at t given earlier events."""
    return InfluenceModel(view, spec).intensity(k, t, history)


# ==================== BOUND EVALUATOR ====================

class InfluenceModel:
    """
    Model evaluator over one parameter view.

    The psi matrix and the embedding part of the first phi layer depend only on
    the (src, tgt) pair, so they are evaluated once here; per-lag work is the
    time channel and the remaining phi layers. Works on floats, tape Vars and,
    through intensity_grid, numpy arrays.
    """

    def __init__(self, view: ParamView, spec: ModelSpec):
        self.view = view
        self.spec = spec
        K = spec.num_types
        emb = view.embeddings
        rows, biases = view.phi_layers[0]
        time_col = 2 * spec.embedding_dim
        self._arrays = None

        self._psi = [[psi(view, emb[j], emb[k]) for k in range(K)] for j in range(K)]
        self._time_weights = [-r[time_col] for r in rows]
        self._pre = [[_dense([r[:time_col] for r in rows], biases, list(emb[j]) + list(emb[k]))
                      for k in range(K)] for j in range(K)]

    @classmethod
    def from_store(cls, store: ParamStore, spec: ModelSpec, tape=None) -> 'InfluenceModel':
        view = store.view() if tape is None else store.bind(tape)
        return cls(view, spec)

    @property
    def num_types(self) -> int:
        return self.spec.num_types

    def psi_value(self, j: int, k: int):
        return self._psi[j][k]

    def delay(self, j: int, k: int):
        return self.view.delays[j][k]

    def phi_lag(self, j: int, k: int, u):
        h = [dm.softplus(p + w * u) for p, w in zip(self._pre[j][k], self._time_weights)]
        return _phi_tail(self.view, self.spec, h)

    def influence(self, j: int, k: int, dt):
        return self._psi[j][k] * self.phi_lag(j, k, dm.absolute(dt - self.view.delays[j][k]))

    def pre_intensity(self, k: int, t: float, history: EventSequence):
        acc = self.view.baselines[k]
        for t_i, j in history:
            acc = acc + self.influence(j, k, t - t_i)
        return acc

    def _check_history(self, t, history):
        if len(history) and history.last_time >= t:
            raise ContractViolation(
                f"History event at t={history.last_time} is not strictly before t={t}")

    def intensity(self, k: int, t: float, history: EventSequence):
        self._check_history(t, history)
        return apply_link(self.pre_intensity(k, t, history), self.spec)

    def intensities(self, t: float, history: EventSequence) -> list:
        """All K intensities at t; the history loop is shared across target types."""
        self._check_history(t, history)
        K = self.num_types
        acc = list(self.view.baselines)
        for t_i, j in history:
            dt = t - t_i
            for k in range(K):
                acc[k] = acc[k] + self.influence(j, k, dt)
        return [apply_link(a, self.spec) for a in acc]

    def arrays(self) -> 'KernelArrays':
        """Numeric snapshot for vectorized evaluation (built once per model)."""
        if getattr(self, '_arrays', None) is None:
            self._arrays = KernelArrays(self)
        return self._arrays

    def intensity_grid(self, times, events: EventSequence, strict: bool = True) -> np.ndarray:
        """
        Intensities of every type at every grid time.

        Each grid time sees the events of `events` strictly before it (or at or
        before it when strict is False). Evaluated on values, never on the tape.

        Returns:
            ndarray of shape (K, len(times))
        """
        pre, _ = self.arrays().forward(times, events, strict=strict)
        return apply_link(pre, self.spec)

    def kernel_values(self, j: int, k: int, dt) -> np.ndarray:
        """Influence f_{j->k} over an array of lags."""
        arrays = self.arrays()
        dt = np.asarray(dt, dtype=np.float64)
        phi_values, _ = arrays.phi_forward(j, k, np.abs(dt - arrays.delay[j, k]).ravel())
        return (arrays.psi[j, k] * phi_values).reshape(dt.shape)

    def push_adjoints(self, tape, adjoints: 'ModelAdjoints'):
        """Hand adjoints of the per-pair quantities to the tape nodes they belong to."""
        view = self.view
        K = self.num_types
        for k in range(K):
            tape.accumulate(view.baselines[k], adjoints.alpha[k])
        for j in range(K):
            for k in range(K):
                tape.accumulate(self._psi[j][k], adjoints.psi[j, k])
                tape.accumulate(view.delays[j][k], adjoints.delay[j, k])
                for h, node in enumerate(self._pre[j][k]):
                    tape.accumulate(node, adjoints.pre1[j, k, h])
        for h, node in enumerate(self._time_weights):
            tape.accumulate(node, adjoints.time_weights[h])
        for (rows, biases), (d_w, d_b) in zip(view.phi_layers[1:], adjoints.layers):
            for r, row in enumerate(rows):
                for c, node in enumerate(row):
                    tape.accumulate(node, d_w[r, c])
                tape.accumulate(biases[r], d_b[r])

    def __getstate__(self):
        return {'view': self.view, 'spec': self.spec}

    def __setstate__(self, state):
        self.__init__(state['view'], state['spec'])


# ==================== VECTORIZED EVALUATION ====================

@dataclass
class PairCache:
    """Forward state of one (src, tgt) pair over the active (event, grid) entries."""
    j: int
    k: int
    cols: np.ndarray
    sign: np.ndarray
    phi: np.ndarray
    state: tuple


@dataclass
class ModelAdjoints:
    alpha: np.ndarray
    psi: np.ndarray
    delay: np.ndarray
    pre1: np.ndarray
    time_weights: np.ndarray
    layers: list


class KernelArrays:
    """
    Values of an InfluenceModel as numpy arrays.

    The temporal network runs as matrix products over every active
    (history event, grid time) entry of a pair at once; backward() returns the
    loss adjoints of the per-pair quantities the model keeps on its tape.
    """

    def __init__(self, model: InfluenceModel):
        v = dm.value_of
        view, spec = model.view, model.spec
        K = spec.num_types
        self.spec = spec
        self.alpha = np.array([v(a) for a in view.baselines], dtype=np.float64)
        self.psi = np.array([[v(model._psi[j][k]) for k in range(K)] for j in range(K)])
        self.delay = np.array([[v(view.delays[j][k]) for k in range(K)] for j in range(K)])
        self.pre1 = np.array([[[v(p) for p in model._pre[j][k]] for k in range(K)] for j in range(K)])
        self.time_weights = np.array([v(w) for w in model._time_weights])
        self.layers = [(np.array([[v(w) for w in row] for row in rows]),
                        np.array([v(b) for b in biases]))
                       for rows, biases in view.phi_layers[1:]]

    def phi_forward(self, j: int, k: int, u: np.ndarray):
        """phi over a 1-D array of shifted lags, plus the state backward needs."""
        a, b = self.spec.clip_bounds
        z = self.pre1[j, k][:, None] + self.time_weights[:, None] * u[None, :]
        zs = [z]
        acts = [np.logaddexp(0.0, z)]
        for weights, biases in self.layers[:-1]:
            z = weights @ acts[-1] + biases[:, None]
            zs.append(z)
            acts.append(np.logaddexp(0.0, z))
        weights, biases = self.layers[-1]
        raw = (weights @ acts[-1])[0] + biases[0]
        return soft_clip(raw, a, b, self.spec.smoothness), (u, zs, acts, raw)

    def phi_backward(self, state, d_phi: np.ndarray):
        """Adjoints of phi's inputs and weights given d(loss)/d(phi) per entry."""
        u, zs, acts, raw = state
        a, b = self.spec.clip_bounds
        beta = 1.0 / self.spec.smoothness
        d_raw = d_phi * (special.expit((raw - a) * beta) - special.expit((raw - b) * beta))

        d_layers = [None] * len(self.layers)
        head_weights, _ = self.layers[-1]
        d_layers[-1] = (d_raw[None, :] @ acts[-1].T, np.array([d_raw.sum()]))
        d_act = head_weights.T @ d_raw[None, :]
        for l in range(len(self.layers) - 2, -1, -1):
            d_z = d_act * special.expit(zs[l + 1])
            weights, _ = self.layers[l]
            d_layers[l] = (d_z @ acts[l].T, d_z.sum(axis=1))
            d_act = weights.T @ d_z
        d_z1 = d_act * special.expit(zs[0])
        d_pre1 = d_z1.sum(axis=1)
        d_time_weights = (d_z1 * u[None, :]).sum(axis=1)
        d_u = (self.time_weights[:, None] * d_z1).sum(axis=0)
        return d_pre1, d_time_weights, d_layers, d_u

    def forward(self, times, events: EventSequence, strict: bool = True, keep: bool = False):
        """
        Pre-link intensities on a time grid.

        Returns:
            (pre of shape (K, G), list of PairCache when keep is set)
        """
        times = np.asarray(times, dtype=np.float64).ravel()
        K = self.alpha.size
        G = times.size
        pre = np.repeat(self.alpha[:, None], G, axis=1)
        caches = []
        ev_times = events.times_array
        ev_marks = events.marks_array
        for j in range(K):
            src = ev_times[ev_marks == j]
            if src.size == 0:
                continue
            lag = times[None, :] - src[:, None]
            active = lag > 0.0 if strict else lag >= 0.0
            _, cols = np.nonzero(active)
            if cols.size == 0:
                continue
            active_lags = lag[active]
            for k in range(K):
                diff = active_lags - self.delay[j, k]
                phi_values, state = self.phi_forward(j, k, np.abs(diff))
                pre[k] += np.bincount(cols, weights=self.psi[j, k] * phi_values, minlength=G)
                if keep:
                    caches.append(PairCache(j, k, cols, np.sign(diff), phi_values, state))
        return pre, caches

    def backward(self, caches, d_pre: np.ndarray) -> ModelAdjoints:
        """Adjoints given d(loss)/d(pre-link intensity) of shape (K, G)."""
        adjoints = ModelAdjoints(
            alpha=d_pre.sum(axis=1),
            psi=np.zeros_like(self.psi),
            delay=np.zeros_like(self.delay),
            pre1=np.zeros_like(self.pre1),
            time_weights=np.zeros_like(self.time_weights),
            layers=[(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers],
        )
        for cache in caches:
            j, k = cache.j, cache.k
            upstream = d_pre[k, cache.cols]
            adjoints.psi[j, k] += float((upstream * cache.phi).sum())
            d_pre1, d_time_weights, d_layers, d_u = self.phi_backward(
                cache.state, upstream * self.psi[j, k])
            adjoints.pre1[j, k] += d_pre1
            adjoints.time_weights += d_time_weights
            for (acc_w, acc_b), (d_w, d_b) in zip(adjoints.layers, d_layers):
                acc_w += d_w
                acc_b += d_b
            # u = |lag - d|
            adjoints.delay[j, k] -= float((d_u * cache.sign).sum())
        return adjoints


def link_derivative(x: np.ndarray, spec: ModelSpec) -> np.ndarray:
    if spec.link == LINK_ELU_PLUS_ONE:
        return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))
    return special.expit(spec.softplus_beta * x)


class ConstantIntensityModel:
    """Per-type constant rates; the baseline every trained model is compared against."""

    def __init__(self, rates: Sequence[float]):
        self.rates = np.asarray(rates, dtype=np.float64)
        if self.rates.ndim != 1 or np.any(self.rates < 0):
            raise ContractViolation(f"Rates must be a non-negative vector (got {rates})")

    @classmethod
    def fit(cls, sequences: Sequence[EventSequence], num_types: int) -> 'ConstantIntensityModel':
        """Maximum-likelihood rates: count of type k over total observed time."""
        counts = np.zeros(num_types)
        exposure = 0.0
        for seq in sequences:
            exposure += seq.horizon
            for k in seq.marks:
                counts[k] += 1
        if exposure <= 0:
            raise ContractViolation("Cannot fit rates without observed time")
        rates = counts / exposure
        logging.info(f"Constant-intensity baseline rates: {np.round(rates, 4).tolist()}")
        return cls(rates)

    @property
    def num_types(self) -> int:
        return self.rates.size

    def intensity(self, k, t, history):
        return float(self.rates[k])

    def intensities(self, t, history):
        return self.rates.tolist()

    def intensity_grid(self, times, events, strict=True):
        times = np.asarray(times, dtype=np.float64)
        return np.repeat(self.rates[:, None], times.size, axis=1)


# ==================== EXPORTS ====================

@dataclass
class KernelCurve:
    source: int
    target: int
    dt: np.ndarray
    values: np.ndarray


@dataclass
class IntensityCurve:
    times: np.ndarray
    values: np.ndarray  # (K, len(times))


def default_kernel_grid(mean_gap: Optional[float], points: int = KERNEL_GRID_POINTS) -> np.ndarray:
    span = KERNEL_GRID_SPAN * (mean_gap if mean_gap else 1.0)
    return np.linspace(0.0, span, points)


def export_kernel_curves(model: InfluenceModel, grid) -> List[KernelCurve]:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ContractViolation("Kernel grid must be a non-empty 1-D array")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ContractViolation("Kernel grid must be non-negative and strictly increasing")
    K = model.num_types
    return [KernelCurve(j, k, grid, model.kernel_values(j, k, grid))
            for j in range(K) for k in range(K)]


def export_intensity_curve(model, events: EventSequence, points: int = 1000) -> IntensityCurve:
    times = np.linspace(0.0, events.horizon, points)
    return IntensityCurve(times, model.intensity_grid(times, events))


def write_kernel_csv(curves: List[KernelCurve], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['src', 'tgt', 'dt', 'f'])
        for curve in curves:
            for dt, value in zip(curve.dt, curve.values):
                writer.writerow([curve.source, curve.target, repr(float(dt)), repr(float(value))])
    logging.info(f"Wrote {len(curves)} kernel curves to {path}")
    return path


def write_intensity_csv(curve: IntensityCurve, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['t', 'k', 'lambda'])
        for k in range(curve.values.shape[0]):
            for t, value in zip(curve.times, curve.values[k]):
                writer.writerow([repr(float(t)), k, repr(float(value))])
    logging.info(f"Wrote intensity curve ({curve.values.shape[0]} types) to {path}")
    return path


# ==================== RECOVERED PARAMETERS ====================

def recovered_parameters(model: InfluenceModel, grid=None) -> dict:
    """
    Learned structure in reportable form.

    baselines_pre_link are the alpha_k constants; baselines are the intensities
    at empty history, link(alpha_k). peak_influence holds the signed value of
    psi*phi at its largest magnitude over the grid.
    """
    K = model.num_types
    spec = model.spec
    delays = [[float(model.delay(j, k)) for k in range(K)] for j in range(K)]
    if grid is None:
        span = max(KERNEL_GRID_SPAN, 2.0 * max(max(row) for row in delays))
        grid = np.linspace(0.0, span, 4 * KERNEL_GRID_POINTS)
    alphas = [float(a) for a in model.view.baselines]
    peak = np.zeros((K, K))
    for j in range(K):
        for k in range(K):
            values = model.kernel_values(j, k, grid)
            peak[j, k] = values[np.argmax(np.abs(values))]
    return {
        'link': spec.link,
        'baselines_pre_link': alphas,
        'baselines': [float(apply_link(a, spec)) for a in alphas],
        'delays': delays,
        'psi': [[float(model.psi_value(j, k)) for k in range(K)] for j in range(K)],
        'peak_influence': peak.tolist(),
    }
