"""Evaluation command: prediction metrics, held-out NLL and recovered structure."""

import logging
from pathlib import Path

import click

from cli.common import dataset_manifest, guarded, load_model
from cli.run_config import build_run_config
from core.likelihood import dataset_nll
from core.model import ConstantIntensityModel, recovered_parameters
from core.predict import evaluate, paired_bootstrap_ci, write_eval_json, write_predictions_csv
from core.sequences import read_sequences, empirical_mean_gap
from core.simulate import build_source, GroundTruthProcess
from error_handling import ConfigError
from utils.constants import TRAIN_FILE, VAL_FILE, TYPE_AT_PREDICTED, TYPE_AT_TRUE
from utils.random_streams import STREAM_VALIDATION


@click.command('eval')
@click.argument('data_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Trained model to evaluate.')
@click.option('--baseline', is_flag=True, help='Evaluate the constant-intensity baseline instead.')
@click.option('--oracle', is_flag=True, help="Evaluate the generator's ground-truth process instead.")
@click.option('--sequences', 'sequences_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Test file (default: DATA_DIR/val.jsonl).')
@click.option('--compare-baseline', is_flag=True,
              help='Add paired bootstrap intervals against the constant baseline.')
@click.option('--truncation', 'truncation_multiplier', type=float, default=None,
              help='Horizon as a multiple of the mean gap (5 or 10).')
@click.option('--type-at', type=click.Choice([TYPE_AT_PREDICTED, TYPE_AT_TRUE]), default=None)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default=None, help='Report JSON.')
@click.option('--predictions', 'predictions_path', type=click.Path(dir_okay=False), default=None,
              help='Per-event CSV.')
@click.pass_obj
@guarded('eval')
def eval_cmd(state, data_dir, checkpoint, baseline, oracle, sequences_path, compare_baseline,
             truncation_multiplier, type_at, out_path, predictions_path):
    """Score a model on held-out sequences of DATA_DIR."""
    if sum([checkpoint is not None, baseline, oracle]) != 1:
        raise click.UsageError("Give exactly one of --checkpoint, --baseline, --oracle")

    data_dir = Path(data_dir)
    manifest = dataset_manifest(data_dir)
    num_types = int(manifest['num_types'])
    generator = manifest.get('generator')
    settings = state.settings({'predict': {'truncation_multiplier': truncation_multiplier,
                                           'type_at': type_at}}, generator)
    run = build_run_config(settings, num_types)

    test = read_sequences(Path(sequences_path) if sequences_path else data_dir / VAL_FILE, num_types)
    train = None
    metadata = {}
    if checkpoint:
        model, metadata = load_model(checkpoint)
        label = str(checkpoint)
    elif baseline:
        train = read_sequences(data_dir / TRAIN_FILE, num_types)
        model = ConstantIntensityModel.fit(train, num_types)
        label = 'constant-baseline'
    else:
        model = build_source(generator, manifest.get('settings') or {})
        if not isinstance(model, GroundTruthProcess):
            raise ConfigError(f"Generator '{generator}' has no intensity oracle")
        label = f'oracle:{generator}'

    mean_gap = run.predict.mean_gap or metadata.get('mean_gap')
    if mean_gap is None:
        train = train or read_sequences(data_dir / TRAIN_FILE, num_types)
        mean_gap = empirical_mean_gap(train)
    predict_config = run.predict.with_mean_gap(mean_gap)

    report = evaluate(test, model, predict_config, state.task_manager)
    nll = dataset_nll(test, model, run.likelihood, STREAM_VALIDATION, state.task_manager)
    summary = {**report.to_dict(), 'nll': nll.total_nll, 'model': label}

    if checkpoint:
        summary['recovered'] = recovered_parameters(model)

    if compare_baseline:
        train = train or read_sequences(data_dir / TRAIN_FILE, num_types)
        reference = ConstantIntensityModel.fit(train, num_types)
        ref_report = evaluate(test, reference, predict_config, state.task_manager)
        ref_nll = dataset_nll(test, reference, run.likelihood, STREAM_VALIDATION, state.task_manager)
        nll_ci = paired_bootstrap_ci(nll.per_sequence, ref_nll.per_sequence)
        se_ci = paired_bootstrap_ci(report.squared_errors(), ref_report.squared_errors())
        summary['baseline'] = {
            **ref_report.to_dict(),
            'nll': ref_nll.total_nll,
            'nll_difference_ci': [nll_ci.low, nll_ci.high],
            'squared_error_difference_ci': [se_ci.low, se_ci.high],
            'better_nll': bool(nll_ci.high < 0.0),
            'better_rmse': bool(se_ci.high < 0.0),
        }

    state.task_manager.emit('evaluation', summary)
    if out_path:
        write_eval_json(report, out_path, config=predict_config.to_dict(),
                        extra={k: v for k, v in summary.items() if k not in report.to_dict()})
    if predictions_path:
        write_predictions_csv(report.records, predictions_path)
    logging.info(f"{label}: RMSE {report.time_rmse:.4f}, type error {report.type_error_rate:.4f}, "
                 f"NLL {nll.total_nll:.4f}")
