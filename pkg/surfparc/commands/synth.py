import logging
import os

import click

from surfparc.errors import ConfigError
from surfparc.geometry.synthetic import make_icosphere, perturb_sphere, synth_labels_voronoi
from surfparc.utils.dataset import DatasetManifest, SubjectRecord, assign_folds, kfold_split
from surfparc.utils.mesh_io import save_mesh, write_features, write_labels

logger = logging.getLogger(__name__)


def write_synthetic_dataset(out_dir, level=4, regions=8, subjects=20, seed=7, amplitude=0.05,
                            noise=0.3, folds=5, mesh_format='off'):
    """
    Generate perturbed icosphere subjects sharing one Voronoi atlas.

    Returns:
        str: Path of the written manifest.
    """
    if subjects < 1:
        raise ConfigError(f'need at least one subject, got {subjects}')
    sphere = make_icosphere(level)
    ids = [f'subj_{i:03d}' for i in range(subjects)]
    fold_of = assign_folds(kfold_split(ids, folds, seed)) if folds else {}
    records = []
    for i, subject_id in enumerate(ids):
        mesh = perturb_sphere(sphere, amplitude, seed=[seed, i])
        labels, features = synth_labels_voronoi(mesh, regions, seed=seed,
                                                noise_seed=[seed, i, 1], noise=noise)
        mesh_name = f'{subject_id}.{mesh_format}'
        save_mesh(mesh, os.path.join(out_dir, mesh_name))
        write_features(features, os.path.join(out_dir, f'{subject_id}.features.txt'))
        write_labels(labels, os.path.join(out_dir, f'{subject_id}.labels.txt'))
        records.append(SubjectRecord(subject_id, mesh_name, f'{subject_id}.features.txt',
                                     f'{subject_id}.labels.txt', fold_of.get(subject_id)))
    manifest_path = os.path.join(out_dir, 'manifest.txt')
    DatasetManifest(records, out_dir).write(manifest_path)
    logger.info(f"✅ Wrote {subjects} synthetic subjects ({sphere.num_vertices} vertices each) to {out_dir}")
    return manifest_path


@click.command('synth')
@click.option('--out', 'out_dir', required=True, help='Directory for meshes, features, labels and manifest.')
@click.option('--level', default=4, show_default=True, help='Icosphere subdivision level (0-6).')
@click.option('--regions', default=8, show_default=True, help='Number of labels.')
@click.option('--subjects', default=20, show_default=True)
@click.option('--seed', default=7, show_default=True)
@click.option('--amplitude', default=0.05, show_default=True, help='Radial shape perturbation per subject.')
@click.option('--noise', default=0.3, show_default=True, help='Feature noise standard deviation.')
@click.option('--folds', default=5, show_default=True, help='Fold ids written to the manifest (0 for none).')
@click.option('--format', 'mesh_format', type=click.Choice(['off', 'obj']), default='off', show_default=True)
def synth(out_dir, level, regions, subjects, seed, amplitude, noise, folds, mesh_format):
    """Generate a synthetic icosphere dataset with geodesic-Voronoi labels."""
    manifest_path = write_synthetic_dataset(out_dir, level, regions, subjects, seed, amplitude, noise,
                                            folds, mesh_format)
    click.echo(manifest_path)
