import json
import logging
import os

import click
import numpy as np

from surfparc.ai.network import COARSE, REFINE, ParcellationModel
from surfparc.ai.training import train_two_stage
from surfparc.errors import ConfigError
from surfparc.run_config import RunConfig, resolve_output_dir
from surfparc.utils.checkpoint import COARSE_CHECKPOINT, REFINED_CHECKPOINT, save_checkpoint
from surfparc.utils.dataset import load_dataset
from surfparc.utils.metrics_log import MetricsLog
from surfparc.utils.mesh_io import atomic_write
from surfparc.utils.report import evaluate as evaluate_model

logger = logging.getLogger(__name__)


def load_run_config(settings, config_path=None, seed=None, coarse_epochs=None, refine_epochs=None):
    run_config = RunConfig.load_from_file(config_path or settings.DEFAULT_RUN_CONFIG)
    if seed is not None:
        run_config.seed = seed
    if coarse_epochs is not None:
        run_config.schedule.coarse_epochs = coarse_epochs
    if refine_epochs is not None:
        run_config.schedule.refine_epochs = refine_epochs
    return run_config.validate()


def run_training(subjects, run_config, out_dir):
    """Train one model and write config, metrics log and per-stage checkpoints."""
    os.makedirs(out_dir, exist_ok=True)
    run_config.save_to_file(os.path.join(out_dir, 'config.json'))
    model = ParcellationModel(run_config)
    checkpoints = {COARSE: COARSE_CHECKPOINT, REFINE: REFINED_CHECKPOINT}

    def on_stage_end(stage, result):
        save_checkpoint(os.path.join(out_dir, checkpoints[stage]), result.model, result.optimizers)

    metrics_log = MetricsLog(os.path.join(out_dir, 'metrics.log'))
    return train_two_stage(model, subjects, run_config.schedule, metrics_log=metrics_log,
                           on_stage_end=on_stage_end)


def _summary(reports):
    """Mean and std of held-out per-subject Dice pooled over folds."""
    values = [d for report in reports for d in report.subject_dice.values()]
    return {'mean_dice': float(np.mean(values)), 'std_dice': float(np.std(values)), 'subjects': len(values)}


@click.command('train')
@click.option('--manifest', required=True, help='Dataset manifest.')
@click.option('--config', 'config_path', default=None,
              help='Run configuration JSON (defaults to config/runs/default.json).')
@click.option('--out', 'out_dir', default=None, help='Output directory (overrides env and run file).')
@click.option('--fold', type=int, default=None, help='Hold out this fold (1-based) and train on the rest.')
@click.option('--all-folds', is_flag=True, help='Run the full k-fold cross-validation.')
@click.option('--seed', type=int, default=None)
@click.option('--coarse-epochs', type=int, default=None)
@click.option('--refine-epochs', type=int, default=None)
@click.pass_obj
def train(settings, manifest, config_path, out_dir, fold, all_folds, seed, coarse_epochs, refine_epochs):
    """Two-stage training with a checkpoint after each stage."""
    if fold is not None and all_folds:
        raise ConfigError('--fold and --all-folds are mutually exclusive')
    run_config = load_run_config(settings, config_path, seed, coarse_epochs, refine_epochs)
    if fold is not None and not 1 <= fold <= run_config.folds:
        raise ConfigError(f'--fold must be in [1, {run_config.folds}], got {fold}')
    out_dir = resolve_output_dir(run_config, out_dir, settings.OUTPUT_DIR)
    dataset = load_dataset(manifest, run_config, settings.WORKERS)

    if fold is None and not all_folds:
        run_training(dataset.subjects, run_config, out_dir)
        click.echo(out_dir)
        return

    assignment = dataset.manifest.fold_assignments(run_config.folds, run_config.seed)
    selected = range(1, run_config.folds + 1) if all_folds else [fold]
    reports = {COARSE: [], REFINE: []}
    for k in selected:
        train_ids = [i for i in dataset.manifest.ids if assignment[i] != k]
        test_ids = [i for i in dataset.manifest.ids if assignment[i] == k]
        fold_dir = os.path.join(out_dir, f'fold_{k}')
        logger.info(f"🔁 Fold {k}: {len(train_ids)} train / {len(test_ids)} held-out subjects")
        result = run_training(dataset.select(train_ids), run_config, fold_dir)
        for stage in (COARSE, REFINE):
            if stage == REFINE and run_config.schedule.refine_epochs == 0:
                continue
            report = evaluate_model(result.model, dataset.select(test_ids), stage)
            report.save(os.path.join(fold_dir, f'report_{stage}.json'))
            reports[stage].append(report)

    summary = {stage: _summary(stage_reports) for stage, stage_reports in reports.items() if stage_reports}
    atomic_write(os.path.join(out_dir, 'cv_summary.json'),
                 [json.dumps(summary, indent=2, sort_keys=True) + '\n'])
    for stage, stats in summary.items():
        click.echo(f"{stage} dice={stats['mean_dice']:.4f} std={stats['std_dice']:.4f} "
                   f"subjects={stats['subjects']}")
