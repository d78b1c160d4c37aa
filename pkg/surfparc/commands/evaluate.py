import click

from surfparc.errors import ConfigError
from surfparc.utils.checkpoint import load_checkpoint
from surfparc.utils.dataset import load_dataset
from surfparc.utils.report import evaluate as evaluate_model


@click.command('evaluate')
@click.option('--checkpoint', 'checkpoint_path', required=True)
@click.option('--manifest', required=True)
@click.option('--fold', type=int, default=None, help='Evaluate only this held-out fold.')
@click.option('--stage', type=click.Choice(['coarse', 'refine']), default=None)
@click.option('--out', 'report_path', default=None, help='Also write the JSON report here.')
@click.pass_obj
def evaluate(settings, checkpoint_path, manifest, fold, stage, report_path):
    """Per-subject and per-region Dice report as JSON."""
    checkpoint = load_checkpoint(checkpoint_path)
    run_config = checkpoint.run_config
    dataset = load_dataset(manifest, run_config, settings.WORKERS)
    subjects = dataset.subjects
    if fold is not None:
        if not 1 <= fold <= run_config.folds:
            raise ConfigError(f'--fold must be in [1, {run_config.folds}], got {fold}')
        assignment = dataset.manifest.fold_assignments(run_config.folds, run_config.seed)
        subjects = [s for s in subjects if assignment[s.subject_id] == fold]
    report = evaluate_model(checkpoint.model, subjects, stage)
    if report_path:
        report.save(report_path)
    click.echo(report.to_json())
