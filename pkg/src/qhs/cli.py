"""
CLI entry point for qhs
"""
import logging
import sys
from typing import Any, Callable, Optional

import click
from rich.console import Console
from rich.logging import RichHandler

from qhs import __version__
from qhs.commands.payload import DEFAULT_THRESHOLD, validate_payloads
from qhs.commands.run import run_scenario
from qhs.commands.sweep import run_sweep
from qhs.errors import EXIT_IO, EXIT_OK, EXIT_PAYLOAD_BELOW_THRESHOLD, QhsError
from qhs.utils.formatting import format_error, format_output

logger = logging.getLogger('qhs')


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format='%(message)s',
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@click.group()
@click.version_option(version=__version__)
@click.option('-v', '--verbose', is_flag=True, help='Log engine activity to stderr')
def main(verbose: bool):
    """Discrete-event simulator for hybrid HPC-quantum cluster scheduling"""
    setup_logging(verbose)


# Options shared by all commands
format_option = click.option(
    '--format',
    type=click.Choice(['json', 'text']),
    default='json',
    help='Output format'
)

seed_option = click.option(
    '--seed',
    type=click.IntRange(0, (1 << 64) - 1),
    envvar='QHS_SEED',
    default=None,
    help='Override the scenario seed (also read from QHS_SEED)'
)

config_option = click.option(
    '--config', 'config_path',
    type=click.Path(dir_okay=False),
    required=True,
    help='Scenario or sweep JSON file'
)

out_option = click.option(
    '--out', 'out_dir',
    type=click.Path(file_okay=False),
    required=True,
    help='Output directory'
)


def _invoke(action: Callable[[], Any], format: str) -> Any:
    """Run a command body, mapping qhs and I/O errors to exit codes."""
    try:
        return action()
    except QhsError as e:
        click.echo(format_error(str(e), format), err=True)
        sys.exit(e.exit_code)
    except OSError as e:
        click.echo(format_error(f"I/O error: {e}", format), err=True)
        sys.exit(EXIT_IO)


@main.command('run')
@config_option
@out_option
@click.option('--emit-trace', is_flag=True, help='Also write trace.csv with every processed event')
@seed_option
@format_option
def run_cmd(config_path: str, out_dir: str, emit_trace: bool, seed: Optional[int], format: str):
    """Run one scenario and write metrics.csv, jobs.csv and run_meta.json"""
    data = _invoke(lambda: run_scenario(config_path, out_dir, emit_trace, seed), format)
    click.echo(format_output(data, format))


@main.command('sweep')
@config_option
@out_option
@click.option(
    '--jobs',
    type=click.IntRange(min=0),
    default=1,
    help='Worker processes (0 = one per physical core)'
)
@seed_option
@format_option
def sweep_cmd(config_path: str, out_dir: str, jobs: int, seed: Optional[int], format: str):
    """Run every cell of a parameter sweep and write sweep.csv"""
    data = _invoke(lambda: run_sweep(config_path, out_dir, jobs, seed), format)
    click.echo(format_output(data, format))


@main.command('validate-payload')
@config_option
@click.option(
    '--threshold',
    type=click.FloatRange(0.0, 1.0),
    default=DEFAULT_THRESHOLD,
    help='Minimum SA match rate'
)
@seed_option
@format_option
def validate_payload_cmd(config_path: str, threshold: float, seed: Optional[int], format: str):
    """Check the SA solver against brute-force MIS on every QUBO payload"""
    data = _invoke(lambda: validate_payloads(config_path, threshold, seed), format)
    click.echo(format_output(data, format))
    sys.exit(EXIT_OK if data['passed'] else EXIT_PAYLOAD_BELOW_THRESHOLD)


if __name__ == '__main__':
    main()
