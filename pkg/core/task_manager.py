"""
Worker pool and run-event delivery.

Maps independent per-sequence work over a process pool and writes run events
(epoch records, command summaries, errors) as JSON lines for machine consumers.
"""

import json
import logging
import os
import sys
import time
import uuid
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional


class TaskManager:
    """Ordered parallel map plus JSON-line event stream."""

    def __init__(self, threads: int = 1, stream=None, keep_events: int = 1000):
        """
        Args:
            threads: Worker processes; 1 runs serially, 0 uses every core
            stream: Where JSON lines go (defaults to standard output)
            keep_events: How many recent events stay available in `events`
        """
        if threads is None or threads <= 0:
            threads = os.cpu_count() or 1
        self.threads = int(threads)
        self.run_id = str(uuid.uuid4())[:8]
        self._stream = stream
        self._executor: Optional[ProcessPoolExecutor] = None
        self._keep_events = keep_events
        self.events: List[dict] = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.shutdown()
        return False

    def map(self, fn: Callable, items: Iterable) -> list:
        """
        Apply a picklable module-level function to each item.

        Results come back in input order whatever the worker count, so any
        reduction over them is deterministic.
        """
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        if self._executor is None:
            logging.debug(f"Starting worker pool with {self.threads} processes")
            self._executor = ProcessPoolExecutor(max_workers=self.threads)
        chunksize = max(1, len(items) // (4 * self.threads))
        return list(self._executor.map(fn, items, chunksize=chunksize))

    def shutdown(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def emit(self, event_type: str, data: dict):
        """
        Write one JSON line describing a run event.

        Args:
            event_type: e.g. 'epoch', 'dataset', 'training_complete', 'evaluation', 'error'
            data: JSON-serializable payload, merged into the record
        """
        event = {'event': event_type, **data, 'run': self.run_id, 'time': round(time.time(), 3)}
        line = json.dumps(event, default=_to_json)
        self.events.append(event)
        if len(self.events) > self._keep_events:
            # drop oldest
            del self.events[0]
        stream = self._stream or sys.stdout
        stream.write(line + '\n')
        stream.flush()
        return event


def _to_json(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    return str(value)
