import logging

import click

from config import config
from surfparc.ai.tensor import set_check_finite
from surfparc.errors import ParcellationError

logger = logging.getLogger(__name__)


class SurfparcGroup(click.Group):
    """Turns library failures into one machine-parsable stderr line and an exit code."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except ParcellationError as e:
            click.echo(e.one_line(), err=True)
            ctx.exit(e.exit_code)
        except Exception as e:
            logger.exception("❌ Unexpected failure")
            message = str(e).replace('\n', ' ').replace('"', "'")
            click.echo(f'error kind={type(e).__name__} code=1 message="{message}"', err=True)
            ctx.exit(1)


def create_cli(config_name='default'):
    settings = config[config_name]
    logging.basicConfig(level=settings.LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    set_check_finite(settings.CHECK_FINITE)

    @click.group(cls=SurfparcGroup, help='Two-stage surface parcellation on triangle meshes.')
    @click.pass_context
    def cli(ctx):
        ctx.obj = settings

    from surfparc.commands.synth import synth
    from surfparc.commands.train import train
    from surfparc.commands.infer import infer
    from surfparc.commands.evaluate import evaluate
    from surfparc.commands.gradcheck import gradcheck

    cli.add_command(synth)
    cli.add_command(train)
    cli.add_command(infer)
    cli.add_command(evaluate)
    cli.add_command(gradcheck)

    return cli
