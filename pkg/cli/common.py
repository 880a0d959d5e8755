"""Shared command plumbing: state, settings, guarded execution, model loading."""

import functools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click

from core.model import InfluenceModel, ModelSpec
from core.param_store import ParamStore
from core.sequences import read_manifest
from error_handling import DatasetError, EventKernelError, ErrorContext, get_crash_reporter
from utils.config_manager import ConfigManager
from utils.constants import MANIFEST_FILE

# failures that carry their own diagnostics and never need a crash file
EXPECTED_ERRORS = (EventKernelError, click.ClickException, click.exceptions.Exit, click.Abort)


@dataclass
class CliState:
    task_manager: object
    config_path: Optional[str] = None
    log_path: Optional[str] = None

    def settings(self, overrides: dict, generator: Optional[str] = None) -> dict:
        """Defaults < config file < flags, then generator defaults for anything unset."""
        manager = ConfigManager(self.config_path)
        settings = manager.load_settings()
        manager.apply_overrides(settings, overrides)
        return manager.apply_generator_defaults(settings, generator)


def guarded(operation: str):
    """
    Run a command body inside an ErrorContext.

    Toolkit errors become one JSON error line and exit code 1; click's own
    usage errors pass through (exit code 2).
    """
    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            ctx = click.get_current_context()
            try:
                with ErrorContext(operation, get_crash_reporter(), expected=EXPECTED_ERRORS):
                    return fn(*args, **kwargs)
            except (click.ClickException, click.exceptions.Exit, click.Abort):
                raise
            except EventKernelError as e:
                ctx.obj.task_manager.emit('error', {'type': type(e).__name__, 'message': e.message,
                                                    'operation': operation})
                ctx.exit(1)
            except Exception as e:
                ctx.obj.task_manager.emit('error', {'type': type(e).__name__, 'message': str(e),
                                                    'operation': operation})
                ctx.exit(1)
        return wrapper
    return decorator


def dataset_manifest(data_dir) -> dict:
    return read_manifest(Path(data_dir) / MANIFEST_FILE)


def load_model(checkpoint):
    """
    Model and metadata from a checkpoint written by `train`.

    Returns:
        (InfluenceModel, metadata dict)
    """
    store, metadata = ParamStore.load(checkpoint)
    if 'model_spec' not in metadata:
        raise DatasetError(str(checkpoint), "checkpoint metadata lacks model_spec")
    spec = ModelSpec.from_dict(metadata['model_spec'])
    if spec.layout() != store.layout:
        raise DatasetError(str(checkpoint), "model_spec does not match the stored layout")
    logging.info(f"Loaded model: K={spec.num_types}, link={spec.link}, s={spec.smoothness}")
    return InfluenceModel.from_store(store, spec), metadata
