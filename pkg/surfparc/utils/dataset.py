"""
Dataset manifests, subject loading and subject-level k-fold splits.

Manifest format: one subject per line,

    <id> <mesh path> <feature path> <label path> [fold]

whitespace separated, paths relative to the manifest file, '#' starts a
comment. A label path of '-' marks an unlabelled subject (inference only).
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from surfparc.ai.subject import Subject
from surfparc.errors import ConfigError, DataError, DatasetError
from surfparc.run_config import RunConfig
from surfparc.utils.mesh_io import (
    atomic_write, load_mesh, read_features, read_labels, save_mesh, write_features, write_labels,
)

logger = logging.getLogger(__name__)

NO_LABELS = '-'


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    mesh_path: str
    feature_path: str
    label_path: Optional[str]
    fold: Optional[int] = None


@dataclass
class DatasetManifest:
    records: List[SubjectRecord]
    base_dir: str = '.'

    @property
    def ids(self) -> List[str]:
        return [r.subject_id for r in self.records]

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @classmethod
    def read(cls, path: str) -> 'DatasetManifest':
        try:
            with open(path) as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise DataError(f'cannot read manifest {path}: {e.strerror}') from e
        records, seen = [], set()
        for number, line in enumerate(lines, start=1):
            parts = line.split('#', 1)[0].split()
            if not parts:
                continue
            if len(parts) not in (4, 5):
                raise DataError(f'{path}:{number}: expected id, mesh, features, labels and optional fold')
            subject_id = parts[0]
            if subject_id in seen:
                raise DataError(f'{path}:{number}: duplicate subject id {subject_id!r}')
            seen.add(subject_id)
            try:
                fold = int(parts[4]) if len(parts) == 5 else None
            except ValueError as e:
                raise DataError(f'{path}:{number}: fold id must be an integer') from e
            label_path = None if parts[3] == NO_LABELS else parts[3]
            records.append(SubjectRecord(subject_id, parts[1], parts[2], label_path, fold))
        if not records:
            raise DataError(f'manifest {path} lists no subjects')
        return cls(records, os.path.dirname(os.path.abspath(path)))

    def write(self, path: str):
        lines = []
        for r in self.records:
            fields = [r.subject_id, r.mesh_path, r.feature_path, r.label_path or NO_LABELS]
            if r.fold is not None:
                fields.append(str(r.fold))
            lines.append(' '.join(fields) + '\n')
        atomic_write(path, lines)

    def fold_assignments(self, k: int, seed: int) -> Dict[str, int]:
        """Folds from the manifest if every subject has one, else a seeded split."""
        if all(r.fold is not None for r in self.records):
            folds = {r.subject_id: r.fold for r in self.records}
            if sorted(set(folds.values())) != list(range(1, k + 1)):
                raise ConfigError(f'manifest fold ids {sorted(set(folds.values()))} do not cover 1..{k}')
            return folds
        return assign_folds(kfold_split(self.ids, k, seed))


@dataclass
class Dataset:
    subjects: List[Subject]
    manifest: DatasetManifest
    graph_hashes: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.subjects)

    def by_id(self) -> Dict[str, Subject]:
        return {s.subject_id: s for s in self.subjects}

    def select(self, ids: Sequence[str]) -> List[Subject]:
        lookup = self.by_id()
        return [lookup[i] for i in ids]


def load_subject(record: SubjectRecord, manifest: DatasetManifest, run_config: RunConfig,
                 pool_depth: Optional[int] = None) -> Subject:
    mesh = load_mesh(manifest.resolve(record.mesh_path))
    features = read_features(manifest.resolve(record.feature_path), expected_rows=mesh.num_vertices)
    if features.shape[1] != run_config.coarse.in_features:
        raise DataError(f'{record.feature_path}: expected {run_config.coarse.in_features} feature columns, '
                        f'found {features.shape[1]}')
    labels = None
    if record.label_path is not None:
        labels = read_labels(manifest.resolve(record.label_path), expected_rows=mesh.num_vertices,
                             num_labels=run_config.num_labels)
    depth = len(run_config.coarse.encoder_widths) if pool_depth is None else pool_depth
    return Subject.build(record.subject_id, mesh, features, labels, hops=run_config.hops,
                         pool_depth=depth, seed=run_config.seed)


def load_dataset(manifest_path: str, run_config: RunConfig, workers: int = 1) -> Dataset:
    """
    Load every subject of a manifest with graphs and pseudo-coordinates precomputed.

    Subjects load in a thread pool but keep manifest order; all failures are
    collected and raised together as one DatasetError.
    """
    manifest = DatasetManifest.read(manifest_path)

    def attempt(record: SubjectRecord) -> Tuple[Optional[Subject], Optional[str]]:
        try:
            return load_subject(record, manifest, run_config), None
        except DataError as e:
            return None, str(e)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        outcomes = list(executor.map(attempt, manifest.records))

    failures = {}
    subjects = []
    for record, (subject, error) in zip(manifest.records, outcomes):
        if error is not None:
            failures.setdefault(record.subject_id, []).append(error)
        else:
            subjects.append(subject)
    if failures:
        raise DatasetError(failures)
    dataset = Dataset(subjects, manifest, {s.subject_id: s.graph_hash() for s in subjects})
    logger.info(f"✅ Loaded {len(subjects)} subjects from {manifest_path}")
    return dataset


def save_dataset(dataset: Dataset, directory: str, mesh_format: str = 'off') -> str:
    """Write every subject and a manifest into `directory`; returns the manifest path."""
    records = []
    for subject, original in zip(dataset.subjects, dataset.manifest.records):
        stem = subject.subject_id
        mesh_name = f'{stem}.{mesh_format}'
        save_mesh(subject.mesh, os.path.join(directory, mesh_name))
        write_features(subject.features, os.path.join(directory, f'{stem}.features.txt'))
        label_name = None
        if subject.labels is not None:
            label_name = f'{stem}.labels.txt'
            write_labels(subject.labels, os.path.join(directory, label_name))
        records.append(SubjectRecord(stem, mesh_name, f'{stem}.features.txt', label_name, original.fold))
    manifest_path = os.path.join(directory, 'manifest.txt')
    DatasetManifest(records, directory).write(manifest_path)
    return manifest_path


def kfold_split(ids: Sequence[str], k: int, seed: int) -> List[List[str]]:
    """Seeded shuffle then contiguous chunks; chunk sizes differ by at most one."""
    if k < 2:
        raise ConfigError(f'k-fold split needs k >= 2, got {k}')
    if k > len(ids):
        raise ConfigError(f'cannot split {len(ids)} subjects into {k} folds')
    order = np.random.default_rng(seed).permutation(len(ids))
    return [[ids[i] for i in chunk] for chunk in np.array_split(order, k)]


def assign_folds(folds: List[List[str]]) -> Dict[str, int]:
    """Subject id -> 1-based fold id."""
    return {subject_id: number for number, fold in enumerate(folds, start=1) for subject_id in fold}
