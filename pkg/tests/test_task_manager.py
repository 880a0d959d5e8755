"""Tests for the worker pool and run-event stream."""

import io
import json

import numpy as np

from core.task_manager import TaskManager


def _square(x):
    return x * x


class TestTaskManager:

    def test_map_keeps_input_order(self):
        with TaskManager(threads=2) as tm:
            assert tm.map(_square, range(9)) == [x * x for x in range(9)]

    def test_serial_map(self):
        assert TaskManager(threads=1).map(_square, [3, 1, 2]) == [9, 1, 4]

    def test_events_reach_the_stream(self):
        sink = io.StringIO()
        tm = TaskManager(threads=1, stream=sink)
        tm.emit('epoch', {'epoch': 1, 'loss': 2.5})
        tm.emit('training_complete', {'best_epoch': 1})
        lines = [json.loads(line) for line in sink.getvalue().splitlines()]
        assert [e['event'] for e in lines] == ['epoch', 'training_complete']
        assert lines[0]['loss'] == 2.5 and lines[0]['run'] == tm.run_id

    def test_recent_events_are_bounded(self):
        tm = TaskManager(threads=1, stream=io.StringIO(), keep_events=3)
        for i in range(5):
            tm.emit('epoch', {'epoch': i})
        assert [e['epoch'] for e in tm.events] == [2, 3, 4]

    def test_arrays_are_serialized(self):
        sink = io.StringIO()
        TaskManager(threads=1, stream=sink).emit('export', {'values': np.arange(3)})
        assert json.loads(sink.getvalue())['values'] == [0, 1, 2]

    def test_zero_threads_uses_every_core(self):
        assert TaskManager(threads=0).threads >= 1
