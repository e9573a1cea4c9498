"""
Command line interface for untrained-prior
"""

import click
from loguru import logger

from . import __version__
from .commands import console_logging_mode, create_experiment_commands, create_theory_commands, json_logging_mode


@click.group()
@click.version_option(__version__, prog_name="untrained-prior")
@click.option('--log-format', type=click.Choice(['console', 'json']), default='console', show_default=True,
              help='Log records on stderr as plain text or serialized JSON')
@click.pass_context
def main(ctx, log_format: str):
    """untrained-prior - early stopping for untrained convolutional generators

    Trains two-layer convolutional generators on synthetic linear inverse
    problems, stops them with the discrepancy principle, and checks the
    linearization theory behind it numerically.
    """
    ctx.ensure_object(dict)
    logger.remove()
    ctx.with_resource(json_logging_mode() if log_format == 'json' else console_logging_mode())
    ctx.obj['log_format'] = log_format


create_experiment_commands(main)
create_theory_commands(main)


if __name__ == '__main__':
    main()
