#!/usr/bin/env python3
"""
momentflow CLI - analytic moment propagation through neural networks
"""
import click
from dotenv import load_dotenv

from . import __version__
from .commands.cov import cov_command
from .commands.error_grid import error_grid_command
from .commands.gen_net import gen_net_command
from .commands.propagate import propagate_command
from .commands.tightness import tightness_command
from .utils.context import RunContext

load_dotenv()


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.version_option(__version__, prog_name='momentflow')
@click.option('--debug/--no-debug', default=False, help='Enable debug logging on stderr')
@click.option('--threads', type=click.IntRange(min=1), default=None,
              help='Worker threads (default: MOMENTFLOW_THREADS or 1)')
@click.pass_context
def cli(ctx, debug, threads):
    """
    momentflow propagates Gaussian means and covariances through neural
    networks and checks the results against quadrature and Monte Carlo.

    Optional environment variables:
    - MOMENTFLOW_THREADS (default: 1)
    - MOMENTFLOW_ELEMENT_BUDGET (default: 67108864)
    - MOMENTFLOW_MC_CHUNK (default: 5000)
    """
    try:
        ctx.obj = RunContext(debug=debug, threads=threads)
    except ValueError as e:
        raise click.UsageError(str(e))
    ctx.obj.configure_logging()


cli.add_command(cov_command)
cli.add_command(error_grid_command)
cli.add_command(propagate_command)
cli.add_command(tightness_command)
cli.add_command(gen_net_command)

if __name__ == '__main__':
    cli()
