"""CSV exports of kernels and intensity traces for plotting."""

from pathlib import Path

import click
import numpy as np

from cli.common import guarded, load_model
from core.model import (
    default_kernel_grid, export_intensity_curve, export_kernel_curves,
    write_intensity_csv, write_kernel_csv
)
from core.sequences import read_manifest, read_sequences
from core.simulate import build_source, GroundTruthProcess
from error_handling import ConfigError, ContractViolation
from utils.constants import KERNEL_GRID_POINTS, MANIFEST_FILE


@click.group('export')
def export_group():
    """Write kernel curves or intensity traces as CSV."""


@export_group.command('kernels')
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True)
@click.option('--points', type=click.IntRange(min=2), default=KERNEL_GRID_POINTS, show_default=True)
@click.option('--span', type=float, default=None, help='Largest lag (default: 3 x mean gap).')
@click.pass_obj
@guarded('export kernels')
def kernels_cmd(state, checkpoint, out_path, points, span):
    """All K*K influence curves f(dt) of a trained model (src,tgt,dt,f)."""
    model, metadata = load_model(checkpoint)
    grid = np.linspace(0.0, span, points) if span else default_kernel_grid(metadata.get('mean_gap'), points)
    curves = export_kernel_curves(model, grid)
    write_kernel_csv(curves, out_path)
    state.task_manager.emit('export', {'kind': 'kernels', 'path': str(out_path), 'curves': len(curves)})


@export_group.command('intensity')
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--oracle', is_flag=True, help="Use the ground-truth process named in the sequence file's manifest.")
@click.option('--sequence', 'sequence_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--index', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True)
@click.option('--points', type=click.IntRange(min=2), default=1000, show_default=True)
@click.pass_obj
@guarded('export intensity')
def intensity_cmd(state, checkpoint, oracle, sequence_path, index, out_path, points):
    """Intensity of every type along one sequence (t,k,lambda)."""
    if (checkpoint is None) == (not oracle):
        raise click.UsageError("Give exactly one of --checkpoint or --oracle")

    sequences = read_sequences(sequence_path)
    if index >= len(sequences):
        raise ContractViolation(f"Sequence index {index} out of range ({len(sequences)} sequences)")
    seq = sequences[index]

    if oracle:
        manifest = read_manifest(Path(sequence_path).parent / MANIFEST_FILE)
        model = build_source(manifest.get('generator'), manifest.get('settings') or {})
        if not isinstance(model, GroundTruthProcess):
            raise ConfigError(f"Generator '{manifest.get('generator')}' has no intensity oracle")
    else:
        model, _ = load_model(checkpoint)

    curve = export_intensity_curve(model, seq, points)
    write_intensity_csv(curve, out_path)
    state.task_manager.emit('export', {'kind': 'intensity', 'path': str(out_path),
                                       'index': index, 'events': len(seq)})
