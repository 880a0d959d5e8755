"""
Marked event sequences and the JSON Lines dataset format.

One sequence per line: {"T": <horizon>, "events": [{"t": <time>, "k": <mark>}, ...]}.
A manifest.json sidecar records K, the generator, its config and the seed.
"""

import json
import logging
import math
from bisect import bisect_left
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from error_handling import ContractViolation, DatasetError


class EventSequence:
    """Immutable list of (time, mark) events observed on [0, horizon)."""

    __slots__ = ('times', 'marks', 'horizon')

    def __init__(self, times: Sequence[float], marks: Sequence[int], horizon: float,
                 num_types: Optional[int] = None, validate: bool = True):
        times = tuple(float(t) for t in times)
        marks = tuple(int(k) for k in marks)
        horizon = float(horizon)
        if validate:
            _validate(times, marks, horizon, num_types)
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'marks', marks)
        object.__setattr__(self, 'horizon', horizon)

    def __setattr__(self, name, value):
        raise AttributeError("EventSequence is immutable")

    def __getstate__(self):
        return (self.times, self.marks, self.horizon)

    def __setstate__(self, state):
        for name, value in zip(self.__slots__, state):
            object.__setattr__(self, name, value)

    @classmethod
    def from_events(cls, events: Iterable[Tuple[float, int]], horizon: float,
                    num_types: Optional[int] = None) -> 'EventSequence':
        events = list(events)
        return cls([t for t, _ in events], [k for _, k in events], horizon, num_types)

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.marks))

    def __eq__(self, other):
        return (isinstance(other, EventSequence) and self.times == other.times
                and self.marks == other.marks and self.horizon == other.horizon)

    def __hash__(self):
        return hash((self.times, self.marks, self.horizon))

    def __repr__(self):
        return f"EventSequence(n={len(self)}, T={self.horizon})"

    @property
    def last_time(self) -> float:
        """Time of the last event, 0.0 when empty."""
        return self.times[-1] if self.times else 0.0

    @property
    def times_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=np.float64)

    @property
    def marks_array(self) -> np.ndarray:
        return np.asarray(self.marks, dtype=np.int64)

    def prefix(self, n: int) -> 'EventSequence':
        """First n events, same horizon."""
        return EventSequence(self.times[:n], self.marks[:n], self.horizon, validate=False)

    def count_before(self, t: float) -> int:
        """Number of events strictly before t."""
        return bisect_left(self.times, t)

    def history_before(self, t: float) -> 'EventSequence':
        return self.prefix(self.count_before(t))

    def gaps(self) -> np.ndarray:
        """Consecutive inter-event gaps (first gap measured from 0)."""
        if not self.times:
            return np.empty(0)
        return np.diff(self.times_array, prepend=0.0)

    def to_dict(self) -> dict:
        return {'T': self.horizon, 'events': [{'t': t, 'k': k} for t, k in self]}

    @classmethod
    def from_dict(cls, data: dict, num_types: Optional[int] = None) -> 'EventSequence':
        events = data['events']
        return cls([e['t'] for e in events], [e['k'] for e in events], data['T'], num_types)


def _validate(times, marks, horizon, num_types):
    if not (math.isfinite(horizon) and horizon > 0):
        raise ContractViolation(f"Horizon must be finite and > 0 (got {horizon})")
    if len(times) != len(marks):
        raise ContractViolation(f"{len(times)} times but {len(marks)} marks")
    seen_at_time = set()
    previous = 0.0
    for i, (t, k) in enumerate(zip(times, marks)):
        if not math.isfinite(t) or t < 0.0 or t >= horizon:
            raise ContractViolation(f"Event {i} at t={t} lies outside [0, {horizon})")
        if t < previous:
            raise ContractViolation(f"Event {i} at t={t} precedes event {i - 1} at t={previous}")
        if t > previous:
            seen_at_time.clear()
        if k in seen_at_time:
            raise ContractViolation(f"Duplicate event (t={t}, k={k}) at index {i}")
        if k < 0 or (num_types is not None and k >= num_types):
            raise ContractViolation(f"Event {i} has mark {k} outside [0, {num_types})")
        seen_at_time.add(k)
        previous = t


# ==================== DATASET IO ====================

def write_sequences(path, sequences: Iterable[EventSequence]) -> Path:
    """Write sequences as JSON Lines; output is byte-stable for equal inputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for seq in sequences:
            f.write(json.dumps(seq.to_dict(), separators=(',', ':')))
            f.write('\n')
            count += 1
    logging.info(f"Wrote {count} sequences to {path}")
    return path


def read_sequences(path, num_types: Optional[int] = None) -> List[EventSequence]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(str(path), "file not found")
    sequences = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                sequences.append(EventSequence.from_dict(json.loads(line), num_types))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DatasetError(str(path), f"line {line_no}", e)
            except ContractViolation as e:
                raise DatasetError(str(path), f"line {line_no}: {e.message}")
    logging.debug(f"Read {len(sequences)} sequences from {path}")
    return sequences


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except FileNotFoundError as e:
        raise DatasetError(str(path), "manifest not found", e)
    except json.JSONDecodeError as e:
        raise DatasetError(str(path), "manifest is not JSON", e)
    if 'num_types' not in manifest:
        raise DatasetError(str(path), "manifest lacks num_types")
    return manifest


def infer_num_types(sequences: Iterable[EventSequence]) -> int:
    return max((max(seq.marks) + 1 for seq in sequences if len(seq)), default=1)


def empirical_mean_gap(sequences: Iterable[EventSequence]) -> float:
    """Mean inter-event time pooled over all consecutive gaps of all sequences."""
    gaps = [np.diff(seq.times_array) for seq in sequences if len(seq) > 1]
    if not gaps:
        raise ContractViolation("Mean gap needs at least one sequence with two events")
    return float(np.concatenate(gaps).mean())
