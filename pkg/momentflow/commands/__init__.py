"""Command modules for the momentflow CLI

Each command body runs through ``run_command`` so library errors turn into
an ``Error: ...`` line on stderr and the exit code the error class declares.
"""
import logging
import sys
from typing import Any, Callable

import click
import numpy as np

from ..utils.errors import MomentflowError, ValidationFailed
from ..utils.formatters import format_output

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ['pretty', 'json', 'jsonl', 'ndjson', 'csv']

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def output_options(func):
    """--format/-f plus the --json shorthand"""
    func = click.option('--json', 'as_json', is_flag=True, help='Shorthand for --format json')(func)
    func = click.option('--format', '-f', 'fmt', type=click.Choice(OUTPUT_FORMATS), default='pretty',
                        help='Output format')(func)
    return func


def emit(data: Any, fmt: str, as_json: bool = False):
    click.echo(format_output(data, 'json' if as_json else fmt))


def run_command(func: Callable[[], Any]) -> Any:
    try:
        return func()
    except click.ClickException:
        raise
    except ValidationFailed as e:
        for diagnostic in e.diagnostics:
            click.echo(f"  {diagnostic}", err=True)
        click.echo(f"Error: {str(e)}", err=True)
        sys.exit(e.exit_code)
    except MomentflowError as e:
        click.echo(f"Error: {str(e)}", err=True)
        sys.exit(e.exit_code)
    except OSError as e:
        click.echo(f"Error: {str(e)}", err=True)
        sys.exit(EXIT_IO)
    except np.linalg.LinAlgError as e:
        click.echo(f"Error: numerical failure: {str(e)}", err=True)
        sys.exit(EXIT_NUMERICAL)
    except ValueError as e:
        click.echo(f"Error: {str(e)}", err=True)
        sys.exit(EXIT_USAGE)
