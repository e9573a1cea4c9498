"""
Shared click options and config resolution for all commands

Every flag mirrors one configuration key; flags that are not given leave the
file or default value in place.
"""

from typing import Any, Callable, Dict, Optional, Tuple

import click

from ..config import OUTPUT_FORMATS, RunConfig, parse_config
from ..errors import ConfigError

# flag parameter name -> dotted configuration key
FLAG_KEYS = {
    'out': 'output.directory',
    'seed': 'run.base_seed',
    'rep': 'run.rep',
    'snr': 'grid.snr_list',
    'reps': 'grid.repetitions',
    'tau_max': 'dynamics.tau_max',
    'fudge_l': 'dynamics.fudge_L',
    'eta': 'dynamics.eta',
    'p': 'grid.p_values',
    'q': 'grid.q',
    'n': 'grid.n',
    'k': 'grid.k',
}


def parse_float_list(ctx, param, value: Optional[str]) -> Optional[Tuple[float, ...]]:
    """click callback for comma separated numbers such as ``1,3,9``"""
    if value is None:
        return None
    try:
        return tuple(float(item) for item in value.split(',') if item.strip())
    except ValueError:
        raise click.BadParameter(f"expected a comma separated list of numbers, got '{value}'") from None


def run_options(func: Callable) -> Callable:
    """Attach the flags shared by all commands."""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='YAML configuration file'),
        click.option('--out', type=click.Path(file_okay=False), help='Output directory for artifacts'),
        click.option('--seed', type=int, help='Base seed all random streams are derived from'),
        click.option('--rep', type=int, help='Repetition index for single-cell commands'),
        click.option('--snr', callback=parse_float_list, help='Comma separated SNR levels, e.g. 1,3,9'),
        click.option('--reps', type=int, help='Repetitions per cell'),
        click.option('--tau-max', type=int, help='Maximal number of gradient steps'),
        click.option('--fudge-L', 'fudge_l', type=float, help='Discrepancy principle fudge parameter L'),
        click.option('--eta', type=float, help='Gradient descent step size'),
        click.option('--aligned/--non-aligned', 'aligned', default=None,
                     help='Restrict to aligned or non-aligned operators'),
        click.option('--p', type=float, help='Covariance decay exponent of the generator'),
        click.option('--q', type=float, help='Decay exponent of the forward operator'),
        click.option('--n', type=int, help='Signal dimension'),
        click.option('--k', type=int, help='Generator width'),
        click.option('--format', 'output_format', type=click.Choice(OUTPUT_FORMATS),
                     help='Write artifacts in this format only'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def collect_overrides(options: Dict[str, Any]) -> Dict[str, Any]:
    overrides = {FLAG_KEYS[name]: options.get(name) for name in FLAG_KEYS}
    if overrides['grid.p_values'] is not None:
        overrides['grid.p_values'] = [overrides['grid.p_values']]
    aligned = options.get('aligned')
    if aligned is not None:
        overrides['grid.alignments'] = ['aligned' if aligned else 'non-aligned']
    if options.get('output_format'):
        overrides['output.formats'] = [options['output_format']]
    return overrides


def resolve_config(command: str, options: Dict[str, Any]) -> RunConfig:
    """Build the RunConfig for a command or exit with status 2 listing every bad key."""
    try:
        return parse_config(options.get('config_path'), collect_overrides(options), command=command)
    except ConfigError as e:
        click.secho("Configuration error:", fg='red', err=True)
        for message in e.errors:
            click.echo(f"  • {message}", err=True)
        raise click.exceptions.Exit(2) from e
