import click

from surfparc.run_config import resolve_output_dir
from surfparc.utils.checkpoint import load_checkpoint
from surfparc.utils.dataset import load_dataset
from surfparc.utils.export import export_predictions


@click.command('infer')
@click.option('--checkpoint', 'checkpoint_path', required=True)
@click.option('--manifest', required=True)
@click.option('--out', 'out_dir', default=None, help='Prediction directory.')
@click.option('--stage', type=click.Choice(['coarse', 'refine']), default=None,
              help='Defaults to the stage stored in the checkpoint.')
@click.pass_obj
def infer(settings, checkpoint_path, manifest, out_dir, stage):
    """Predict every subject of a manifest and export labels, probabilities and a VTK mesh."""
    checkpoint = load_checkpoint(checkpoint_path)
    out_dir = resolve_output_dir(checkpoint.run_config, out_dir, settings.OUTPUT_DIR)
    dataset = load_dataset(manifest, checkpoint.run_config, settings.WORKERS)
    for subject in dataset.subjects:
        paths = export_predictions(checkpoint.model, subject, out_dir, stage)
        click.echo(paths.labels)
