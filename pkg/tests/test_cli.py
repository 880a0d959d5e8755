"""End-to-end tests of the command-line surface."""

import csv
import json
import logging

import pytest
from click.testing import CliRunner

from cli import create_cli
from core.param_store import ParamStore

BASE = ['--threads', '1', '--no-log-file']


def events(result):
    return [json.loads(line) for line in result.output.splitlines() if line.startswith('{"event"')]


def invoke(*args):
    return CliRunner().invoke(create_cli(), [*BASE, *map(str, args)])


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    """A small homogeneous dataset and a one-epoch checkpoint trained on it."""
    root = tmp_path_factory.mktemp('cli')
    data = root / 'data'
    simulate = invoke('simulate', 'homogeneous', '--out', data, '--n-train', 12, '--n-val', 4,
                      '--seed', 5, '--horizon', 8.0, '--rate', 1.0)
    assert simulate.exit_code == 0, simulate.output
    checkpoint = root / 'model.ckpt'
    train = invoke('train', data, '--out', checkpoint, '--epochs', 1, '--batch-size', 4, '--q', 2,
                   '--quiet')
    assert train.exit_code == 0, train.output
    logging.getLogger().handlers.clear()
    return root, data, checkpoint, events(simulate), events(train)


class TestSimulate:

    def test_writes_dataset(self, workspace):
        _, data, _, emitted, _ = workspace
        assert [e['event'] for e in emitted] == ['dataset']
        assert (data / 'train.jsonl').exists() and (data / 'val.jsonl').exists()
        manifest = json.loads((data / 'manifest.json').read_text())
        assert manifest['generator'] == 'homogeneous' and manifest['seed'] == 5
        assert len((data / 'train.jsonl').read_text().splitlines()) == 12

    def test_same_seed_same_bytes(self, workspace, tmp_path):
        _, data, _, _, _ = workspace
        again = invoke('simulate', 'homogeneous', '--out', tmp_path, '--n-train', 12, '--n-val', 4,
                       '--seed', 5, '--horizon', 8.0, '--rate', 1.0)
        assert again.exit_code == 0
        assert (tmp_path / 'train.jsonl').read_bytes() == (data / 'train.jsonl').read_bytes()

    def test_unknown_generator(self, tmp_path):
        result = invoke('simulate', 'hawkes', '--out', tmp_path)
        assert result.exit_code == 2


class TestTrain:

    def test_checkpoint_and_logs(self, workspace):
        _, _, checkpoint, _, emitted = workspace
        kinds = [e['event'] for e in emitted]
        assert kinds.count('epoch') == 1
        assert kinds[-1] == 'training_complete'
        assert emitted[-1]['epochs_run'] == 1
        _, metadata = ParamStore.load(checkpoint)
        assert metadata['model_spec']['num_types'] == 1
        assert metadata['mean_gap'] > 0.0
        assert len(checkpoint.with_name('model.ckpt.epochs.jsonl').read_text().splitlines()) == 1
        run = json.loads(checkpoint.with_name('model.ckpt.manifest.json').read_text())
        assert run['stop_reason'] == 'completed'

    def test_missing_manifest(self, tmp_path):
        result = invoke('train', tmp_path, '--out', tmp_path / 'x.ckpt', '--epochs', 1)
        assert result.exit_code == 1
        error = events(result)[-1]
        assert error['event'] == 'error' and error['operation'] == 'train'
        assert error['type'] == 'DatasetError'


class TestEval:

    def test_checkpoint(self, workspace, tmp_path):
        _, data, checkpoint, _, _ = workspace
        out = tmp_path / 'eval.json'
        predictions = tmp_path / 'pred.csv'
        result = invoke('eval', data, '--checkpoint', checkpoint, '--compare-baseline',
                        '--out', out, '--predictions', predictions)
        assert result.exit_code == 0, result.output
        summary = events(result)[-1]
        assert summary['event'] == 'evaluation'
        assert summary['n_events'] > 0
        assert 'recovered' in summary and 'baseline' in summary
        assert isinstance(summary['baseline']['better_nll'], bool)
        written = json.loads(out.read_text())
        assert written['n_events'] == summary['n_events']
        with open(predictions, newline='') as f:
            assert len(list(csv.reader(f))) == 1 + summary['n_events']

    @pytest.mark.parametrize('flag', ['--baseline', '--oracle'])
    def test_reference_models(self, workspace, flag):
        _, data, _, _, _ = workspace
        result = invoke('eval', data, flag)
        assert result.exit_code == 0, result.output
        summary = events(result)[-1]
        assert summary['event'] == 'evaluation'
        assert 'recovered' not in summary

    def test_needs_exactly_one_model(self, workspace):
        _, data, checkpoint, _, _ = workspace
        assert invoke('eval', data).exit_code == 2
        assert invoke('eval', data, '--baseline', '--checkpoint', checkpoint).exit_code == 2

    def test_supply_chain_has_no_oracle(self, tmp_path):
        data = tmp_path / 'supply'
        assert invoke('simulate', 'supply-chain', '--out', data, '--n-train', 2, '--n-val', 2,
                      '--t-max', 5.0).exit_code == 0
        result = invoke('eval', data, '--oracle')
        assert result.exit_code == 1
        error = events(result)[-1]
        assert error['event'] == 'error' and error['type'] == 'ConfigError'


class TestExport:

    def test_kernels(self, workspace, tmp_path):
        _, _, checkpoint, _, _ = workspace
        out = tmp_path / 'kernels.csv'
        result = invoke('export', 'kernels', '--checkpoint', checkpoint, '--out', out, '--points', 11)
        assert result.exit_code == 0, result.output
        with open(out, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['src', 'tgt', 'dt', 'f']
        assert len(rows) == 1 + 11
        assert events(result)[-1]['curves'] == 1

    @pytest.mark.parametrize('source', ['checkpoint', 'oracle'])
    def test_intensity(self, workspace, tmp_path, source):
        _, data, checkpoint, _, _ = workspace
        out = tmp_path / 'intensity.csv'
        model = ['--checkpoint', checkpoint] if source == 'checkpoint' else ['--oracle']
        result = invoke('export', 'intensity', *model, '--sequence', data / 'val.jsonl',
                        '--index', 1, '--out', out, '--points', 20)
        assert result.exit_code == 0, result.output
        with open(out, newline='') as f:
            assert len(list(csv.reader(f))) == 1 + 20

    def test_index_out_of_range(self, workspace, tmp_path):
        _, data, checkpoint, _, _ = workspace
        result = invoke('export', 'intensity', '--checkpoint', checkpoint, '--sequence', data / 'val.jsonl',
                        '--index', 99, '--out', tmp_path / 'x.csv')
        assert result.exit_code == 1
        assert events(result)[-1]['type'] == 'ContractViolation'
