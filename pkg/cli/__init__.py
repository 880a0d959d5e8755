"""
Command-line application factory for EventKernel.
"""

import logging

import click

from cli.common import CliState
from core.task_manager import TaskManager
from utils.constants import __version__
from utils.logging_config import setup_logging


def create_cli():
    """Create and configure the command group."""

    @click.group(context_settings={'help_option_names': ['-h', '--help']})
    @click.version_option(__version__, prog_name='eventkernel')
    @click.option('--verbose', is_flag=True, help='Log at DEBUG level.')
    @click.option('--threads', type=click.IntRange(min=0), default=0, show_default=True,
                  help='Worker processes; 0 uses every core.')
    @click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
                  help='JSON config file (flags override it).')
    @click.option('--log-file/--no-log-file', default=True, show_default=True,
                  help='Also write a log file under logs/.')
    @click.pass_context
    def cli(ctx, verbose, threads, config_path, log_file):
        """Simulate, train, evaluate and inspect neural influence-kernel point processes."""
        log_path = setup_logging(level=logging.DEBUG if verbose else logging.INFO, log_to_file=log_file)
        task_manager = ctx.with_resource(TaskManager(threads))
        ctx.obj = CliState(task_manager=task_manager, config_path=config_path, log_path=log_path)
        logging.debug(f"Worker processes: {task_manager.threads}")

    # Register commands
    from cli.commands.simulate import simulate_cmd
    from cli.commands.train import train_cmd
    from cli.commands.evaluate import eval_cmd
    from cli.commands.export import export_group

    cli.add_command(simulate_cmd)
    cli.add_command(train_cmd)
    cli.add_command(eval_cmd)
    cli.add_command(export_group)

    return cli
