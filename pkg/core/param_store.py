"""
Flat parameter storage with named slices.

All trainable values live in one float64 vector of unconstrained reals. Delays
and temporal-network weights are read through softplus views, which are built
per evaluation and never written back.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.diffcore import softplus, softplus_inverse
from error_handling import DatasetError, StructuralError
from utils.constants import (
    DELAY_RAW_INIT, INIT_HALF_WIDTH, PHI_OUTPUT_BIAS_INIT
)

CHECKPOINT_FORMAT = "eventkernel-params"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ParamSlice:
    name: str
    offset: int
    shape: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


class ParamLayout:
    """Ordered named slices over the flat raw vector."""

    def __init__(self, num_types: int, embedding_dim: int,
                 psi_hidden: Tuple[int, ...], phi_hidden: Tuple[int, ...]):
        self.num_types = int(num_types)
        self.embedding_dim = int(embedding_dim)
        self.psi_hidden = tuple(int(h) for h in psi_hidden)
        self.phi_hidden = tuple(int(h) for h in phi_hidden)

        K, m = self.num_types, self.embedding_dim
        shapes = [('embeddings', (K, m)), ('baselines', (K,)), ('delay_raw', (K, K))]
        for i, (fan_in, fan_out) in enumerate(self.layer_sizes('psi')):
            shapes.append((f'psi.w{i}', (fan_out, fan_in)))
            shapes.append((f'psi.b{i}', (fan_out,)))
        for i, (fan_in, fan_out) in enumerate(self.layer_sizes('phi')):
            shapes.append((f'phi.w{i}_raw', (fan_out, fan_in)))
            shapes.append((f'phi.b{i}', (fan_out,)))

        self.slices: Dict[str, ParamSlice] = {}
        offset = 0
        for name, shape in shapes:
            entry = ParamSlice(name, offset, shape)
            self.slices[name] = entry
            offset += entry.size
        self.size = offset

    def layer_sizes(self, network: str) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) for each dense layer of 'psi' or 'phi'."""
        m = self.embedding_dim
        if network == 'psi':
            widths = [2 * m, *self.psi_hidden, 1]
        elif network == 'phi':
            widths = [2 * m + 1, *self.phi_hidden, 1]
        else:
            raise StructuralError(f"Unknown network '{network}'")
        return list(zip(widths[:-1], widths[1:]))

    def __getitem__(self, name: str) -> ParamSlice:
        try:
            return self.slices[name]
        except KeyError:
            raise StructuralError(f"No parameter slice named '{name}'")

    def __eq__(self, other):
        return isinstance(other, ParamLayout) and self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            'num_types': self.num_types,
            'embedding_dim': self.embedding_dim,
            'psi_hidden': list(self.psi_hidden),
            'phi_hidden': list(self.phi_hidden),
            'size': self.size,
            'slices': [{'name': s.name, 'offset': s.offset, 'shape': list(s.shape)}
                       for s in self.slices.values()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ParamLayout':
        layout = cls(data['num_types'], data['embedding_dim'],
                     tuple(data['psi_hidden']), tuple(data['phi_hidden']))
        if layout.size != data.get('size', layout.size):
            raise DatasetError(detail=f"layout size {data.get('size')} does not match {layout.size}")
        return layout


@dataclass
class ParamView:
    """
    Parameters as nested Python lists of floats or tape Vars.

    Dense layers are stored as (rows, biases) with rows[j][i] the weight from
    input i to unit j. Constrained entries already went through softplus.
    """
    embeddings: list
    baselines: list
    delays: list
    psi_layers: list
    phi_layers: list


class ParamStore:
    """Raw parameter vector plus AdamW state."""

    def __init__(self, layout: ParamLayout, raw: Optional[np.ndarray] = None):
        self.layout = layout
        if raw is None:
            raw = np.zeros(layout.size, dtype=np.float64)
        raw = np.array(raw, dtype=np.float64)
        if raw.shape != (layout.size,):
            raise StructuralError(f"Raw vector has shape {raw.shape}, layout needs ({layout.size},)")
        self.raw = raw
        self.first_moment = np.zeros(layout.size, dtype=np.float64)
        self.second_moment = np.zeros(layout.size, dtype=np.float64)
        self.step_count = 0

    @property
    def size(self) -> int:
        return self.layout.size

    @classmethod
    def initialize(cls, layout: ParamLayout, rng: np.random.Generator) -> 'ParamStore':
        """
        Random initial parameters.

        Embeddings and psi weights are uniform in [-0.5, 0.5]/sqrt(fan_in); baselines
        start at 0 and delay raws at DELAY_RAW_INIT. phi raw weights start at the
        softplus preimage of 1/fan_in so the unclipped output stays inside the clip
        range; the time channel starts at weight 1.
        """
        store = cls(layout)
        store.slice('embeddings')[:] = rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH,
                                                   layout['embeddings'].shape)
        store.slice('delay_raw')[:] = DELAY_RAW_INIT

        for i, (fan_in, fan_out) in enumerate(layout.layer_sizes('psi')):
            scale = 1.0 / math.sqrt(fan_in)
            store.slice(f'psi.w{i}')[:] = rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH,
                                                      (fan_out, fan_in)) * scale

        phi_sizes = layout.layer_sizes('phi')
        for i, (fan_in, fan_out) in enumerate(phi_sizes):
            scale = 1.0 / math.sqrt(fan_in)
            weights = softplus_inverse(1.0 / fan_in) + rng.uniform(
                -INIT_HALF_WIDTH, INIT_HALF_WIDTH, (fan_out, fan_in)) * scale
            if i == 0:
                weights[:, -1] = softplus_inverse(1.0)
            store.slice(f'phi.w{i}_raw')[:] = weights
        store.slice(f'phi.b{len(phi_sizes) - 1}')[:] = PHI_OUTPUT_BIAS_INIT

        logging.debug(f"Initialized {layout.size} parameters for K={layout.num_types}")
        return store

    def slice(self, name: str) -> np.ndarray:
        """Writable view of a named slice, shaped."""
        entry = self.layout[name]
        return self.raw[entry.offset:entry.offset + entry.size].reshape(entry.shape)

    def copy(self) -> 'ParamStore':
        clone = ParamStore(self.layout, self.raw.copy())
        clone.first_moment = self.first_moment.copy()
        clone.second_moment = self.second_moment.copy()
        clone.step_count = self.step_count
        return clone

    # ---------- views ----------

    def view(self) -> ParamView:
        """Float view for evaluation without gradients."""
        return self._build_view(self.raw.tolist())

    def bind(self, tape) -> ParamView:
        """Register every raw entry as a tape leaf (in raw order) and return the view."""
        if len(tape) != 0:
            raise StructuralError("Parameters must be bound to an empty tape")
        return self._build_view([tape.leaf(v) for v in self.raw.tolist()])

    def _build_view(self, flat: list) -> ParamView:
        layout = self.layout

        def take(name):
            entry = layout[name]
            return flat[entry.offset:entry.offset + entry.size]

        def rows(values, n_rows, n_cols, positive=False):
            if positive:
                values = [softplus(v) for v in values]
            return [values[r * n_cols:(r + 1) * n_cols] for r in range(n_rows)]

        K, m = layout.num_types, layout.embedding_dim
        embeddings = rows(take('embeddings'), K, m)
        baselines = list(take('baselines'))
        delays = rows(take('delay_raw'), K, K, positive=True)

        psi_layers = []
        for i, (fan_in, fan_out) in enumerate(layout.layer_sizes('psi')):
            psi_layers.append((rows(take(f'psi.w{i}'), fan_out, fan_in), list(take(f'psi.b{i}'))))
        phi_layers = []
        for i, (fan_in, fan_out) in enumerate(layout.layer_sizes('phi')):
            phi_layers.append((rows(take(f'phi.w{i}_raw'), fan_out, fan_in, positive=True),
                               list(take(f'phi.b{i}'))))
        return ParamView(embeddings, baselines, delays, psi_layers, phi_layers)

    def delay_matrix(self) -> np.ndarray:
        return np.logaddexp(0.0, self.slice('delay_raw'))

    # ---------- checkpoint IO ----------

    def save(self, path, metadata: Optional[dict] = None) -> Path:
        """Write a JSON header line followed by the little-endian float64 payload."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            'format': CHECKPOINT_FORMAT,
            'version': CHECKPOINT_VERSION,
            'layout': self.layout.to_dict(),
            'step_count': self.step_count,
            'metadata': metadata or {},
        }
        with open(path, 'wb') as f:
            f.write(json.dumps(header, sort_keys=True).encode('utf-8'))
            f.write(b'\n')
            f.write(self.raw.astype('<f8').tobytes())
        logging.info(f"Checkpoint saved: {path}")
        return path

    @classmethod
    def load(cls, path) -> Tuple['ParamStore', dict]:
        """
        Read a checkpoint written by save().

        Returns:
            (store, metadata)
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise DatasetError(str(path), "checkpoint not readable", e)

        newline = data.find(b'\n')
        if newline < 0:
            raise DatasetError(str(path), "missing checkpoint header")
        try:
            header = json.loads(data[:newline].decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DatasetError(str(path), "checkpoint header is not JSON", e)
        if header.get('format') != CHECKPOINT_FORMAT:
            raise DatasetError(str(path), f"unknown checkpoint format {header.get('format')!r}")

        layout = ParamLayout.from_dict(header['layout'])
        payload = data[newline + 1:]
        if len(payload) != 8 * layout.size:
            raise DatasetError(str(path), f"payload holds {len(payload)} bytes, expected {8 * layout.size}")
        store = cls(layout, np.frombuffer(payload, dtype='<f8').astype(np.float64))
        store.step_count = int(header.get('step_count', 0))
        logging.debug(f"Checkpoint loaded: {path} ({layout.size} parameters)")
        return store, header.get('metadata', {})
