"""Dataset generation command."""

import logging
from pathlib import Path

import click

from cli.common import guarded
from core.simulate import build_source, generate_dataset
from utils.constants import GENERATORS


@click.command('simulate')
@click.argument('generator', type=click.Choice(GENERATORS))
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
              help='Output directory (default: data/<generator>).')
@click.option('--n-train', type=click.IntRange(min=1), default=None, help='Training sequences.')
@click.option('--n-val', type=click.IntRange(min=1), default=None, help='Validation sequences.')
@click.option('--seed', type=int, default=None, help='Dataset seed.')
@click.option('--horizon', type=float, default=None, help='Observation horizon T (pp1, pp2, homogeneous).')
@click.option('--rate', type=float, default=None, help='Rate of the homogeneous generator.')
@click.option('--t-max', type=float, default=None, help='Horizon of the supply-chain generator.')
@click.pass_obj
@guarded('simulate')
def simulate_cmd(state, generator, out_dir, n_train, n_val, seed, horizon, rate, t_max):
    """Generate train/val JSONL files and a manifest for GENERATOR."""
    settings = state.settings({'simulate': {
        'n_train': n_train, 'n_val': n_val, 'seed': seed,
        'horizon': horizon, 'rate': rate, 't_max': t_max,
    }}, generator)
    sim = settings['simulate']
    source = build_source(generator, sim)
    out_dir = Path(out_dir) if out_dir else Path('data') / generator

    paths = generate_dataset(source, sim['n_train'], sim['n_val'], sim['seed'], out_dir,
                             generator=generator, task_manager=state.task_manager,
                             extra={'settings': sim})
    state.task_manager.emit('dataset', {
        'generator': generator,
        'train': str(paths.train),
        'val': str(paths.val),
        'manifest': str(paths.manifest),
        'seed': sim['seed'],
    })
    logging.info(f"Simulation finished: {out_dir}")
