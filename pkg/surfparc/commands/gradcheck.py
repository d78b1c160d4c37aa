import click

from surfparc.ai.gradcheck import TOLERANCES, failures, run_suite
from surfparc.errors import NumericError


@click.command('gradcheck')
@click.option('--instances', default=20, show_default=True, help='Random instances per layer type.')
@click.option('--seed', default=0, show_default=True)
@click.option('--skip-networks', is_flag=True, help='Only check individual layer types.')
def gradcheck(instances, seed, skip_networks):
    """Compare every backward pass with central finite differences."""
    results = run_suite(instances, seed, networks=not skip_networks)
    for name, error in results.items():
        click.echo(f'{name} max_rel_error={error!r} tolerance={TOLERANCES[name]!r}')
    failed = failures(results)
    if failed:
        raise NumericError('gradient check failed', {name: results[name] for name in failed})
