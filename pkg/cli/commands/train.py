"""Training command."""

import json
import logging
from dataclasses import asdict
from pathlib import Path

import click

from cli.common import dataset_manifest, guarded
from cli.run_config import build_run_config
from core.sequences import read_sequences, empirical_mean_gap
from core.training import Trainer
from utils.constants import (
    TRAIN_FILE, VAL_FILE, ESTIMATORS, LINKS, ENGINES, __version__
)


@click.command('train')
@click.argument('data_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--out', 'checkpoint', type=click.Path(dir_okay=False), required=True,
              help='Checkpoint path (best parameters by validation NLL).')
@click.option('--epochs', type=click.IntRange(min=1), default=None)
@click.option('--patience', type=click.IntRange(min=1), default=None, help='Early-stopping patience in epochs.')
@click.option('--batch-size', type=click.IntRange(min=1), default=None)
@click.option('--lr', 'learning_rate', type=float, default=None, help='AdamW learning rate.')
@click.option('--q', 'segments', type=click.IntRange(min=1), default=None, help='Segments per inter-event interval.')
@click.option('--estimator', type=click.Choice(ESTIMATORS), default=None, help='Integral estimator.')
@click.option('--smoothness', type=float, default=None, help='Soft-clip smoothness s.')
@click.option('--link', type=click.Choice(LINKS), default=None, help='Positive link of the intensity.')
@click.option('--engine', type=click.Choice(ENGINES), default=None, help='Gradient engine.')
@click.option('--seed', type=int, default=None, help='Seed for initialisation, shuffling and sampling.')
@click.option('--quiet', is_flag=True, help='No progress bars.')
@click.pass_obj
@guarded('train')
def train_cmd(state, data_dir, checkpoint, epochs, patience, batch_size, learning_rate, segments,
              estimator, smoothness, link, engine, seed, quiet):
    """Fit a model to DATA_DIR (train.jsonl, val.jsonl, manifest.json)."""
    data_dir = Path(data_dir)
    manifest = dataset_manifest(data_dir)
    num_types = int(manifest['num_types'])
    generator = manifest.get('generator')

    settings = state.settings({
        'model': {'smoothness': smoothness, 'link': link},
        'likelihood': {'segments': segments, 'estimator': estimator, 'seed': seed, 'engine': engine},
        'optimizer': {'learning_rate': learning_rate, 'batch_size': batch_size},
        'training': {'epochs': epochs, 'patience': patience, 'seed': seed},
    }, generator)
    run = build_run_config(settings, num_types, progress=not quiet)

    train = read_sequences(data_dir / TRAIN_FILE, num_types)
    val = read_sequences(data_dir / VAL_FILE, num_types)
    mean_gap = empirical_mean_gap(train)
    logging.info(f"Mean inter-event gap of the training data: {mean_gap:.4f}")

    metadata = {
        'model_spec': run.model.to_dict(),
        'mean_gap': mean_gap,
        'generator': generator,
        'data_dir': str(data_dir),
        'data_seed': manifest.get('seed'),
        'config': run.to_dict(),
        'version': __version__,
    }
    trainer = Trainer(run.model, run.likelihood, run.optimizer, run.training,
                      task_manager=state.task_manager, checkpoint_path=checkpoint, metadata=metadata)
    result = trainer.fit(train, val)

    checkpoint = Path(checkpoint)
    epoch_log = checkpoint.with_name(checkpoint.name + '.epochs.jsonl')
    with open(epoch_log, 'w', encoding='utf-8') as f:
        for record in result.history:
            f.write(json.dumps(asdict(record)) + '\n')
    run_manifest = checkpoint.with_name(checkpoint.name + '.manifest.json')
    with open(run_manifest, 'w', encoding='utf-8') as f:
        json.dump({**metadata, 'best_epoch': result.best_epoch, 'best_val_nll': result.best_val_nll,
                   'stop_reason': result.stop_reason, 'settings': settings}, f, indent=2)

    state.task_manager.emit('training_complete', {
        'checkpoint': str(checkpoint),
        'best_epoch': result.best_epoch,
        'best_val_nll': result.best_val_nll,
        'epochs_run': len(result.history),
        'stop_reason': result.stop_reason,
        'epoch_loss_variance': result.epoch_loss_variance(),
    })
