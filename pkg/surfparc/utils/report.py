"""
Evaluation reports over hard (argmax) predictions.
"""
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from surfparc.ai.losses import region_dice
from surfparc.ai.network import ParcellationModel, predict
from surfparc.ai.subject import Subject
from surfparc.errors import DataError
from surfparc.geometry.mesh import count_label_components
from surfparc.utils.mesh_io import atomic_write

logger = logging.getLogger(__name__)


@dataclass
class EvaluationReport:
    stage: str
    num_labels: int
    subject_dice: Dict[str, float]
    region_dice: Dict[str, List[float]]
    confusion: np.ndarray
    components: Dict[str, int] = field(default_factory=dict)

    @property
    def mean_dice(self) -> float:
        return float(np.mean(list(self.subject_dice.values())))

    @property
    def std_dice(self) -> float:
        return float(np.std(list(self.subject_dice.values())))

    def region_stats(self):
        """Per-label (mean, std) across subjects."""
        table = np.array([self.region_dice[s] for s in sorted(self.region_dice)])
        return table.mean(axis=0), table.std(axis=0)

    def to_dict(self) -> Dict:
        means, stds = self.region_stats()
        return {
            'stage': self.stage,
            'num_labels': self.num_labels,
            'mean_dice': self.mean_dice,
            'std_dice': self.std_dice,
            'subjects': {s: self.subject_dice[s] for s in sorted(self.subject_dice)},
            'regions': [{'label': label, 'mean': float(m), 'std': float(sd)}
                        for label, (m, sd) in enumerate(zip(means, stds))],
            'confusion': self.confusion.tolist(),
            'components': {s: self.components[s] for s in sorted(self.components)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str):
        atomic_write(path, [self.to_json() + '\n'])


def confusion_matrix(truth: np.ndarray, pred: np.ndarray, num_labels: int) -> np.ndarray:
    """Rows are true labels, columns predicted labels."""
    counts = np.bincount(truth * num_labels + pred, minlength=num_labels * num_labels)
    return counts.reshape(num_labels, num_labels)


def build_report(stage: str, num_labels: int, subjects: Sequence[Subject],
                 predictions: Dict[str, np.ndarray]) -> EvaluationReport:
    subject_dice, regions, components = {}, {}, {}
    confusion = np.zeros((num_labels, num_labels), dtype=np.int64)
    for subject in sorted(subjects, key=lambda s: s.subject_id):
        if subject.labels is None:
            raise DataError(f'subject {subject.subject_id} has no labels to evaluate against')
        pred = predictions[subject.subject_id]
        per_region = region_dice(subject.labels, pred, num_labels)
        regions[subject.subject_id] = per_region.tolist()
        subject_dice[subject.subject_id] = float(per_region.mean())
        confusion += confusion_matrix(subject.labels, pred, num_labels)
        components[subject.subject_id] = count_label_components(subject.mesh, pred)[0]
    return EvaluationReport(stage, num_labels, subject_dice, regions, confusion, components)


def evaluate(model: ParcellationModel, subjects: Sequence[Subject],
             stage: Optional[str] = None) -> EvaluationReport:
    """Per-subject and per-region Dice of the model's hard predictions."""
    stage = model.stage if stage is None else stage
    predictions = {}
    for subject in subjects:
        started = time.perf_counter()
        predictions[subject.subject_id], _ = predict(model, subject, stage)
        logger.debug(f"⏱️ {subject.subject_id}: inference {time.perf_counter() - started:.3f}s")
    report = build_report(stage, model.num_labels, subjects, predictions)
    logger.info(f"📊 {stage} Dice {report.mean_dice:.4f} ± {report.std_dice:.4f} "
                f"over {len(subjects)} subjects")
    return report


def majority_baseline(train_subjects: Sequence[Subject], test_subjects: Sequence[Subject],
                      num_labels: int) -> EvaluationReport:
    """Label every vertex with the most frequent training label."""
    counts = np.zeros(num_labels, dtype=np.int64)
    for subject in train_subjects:
        counts += np.bincount(subject.labels, minlength=num_labels)
    majority = int(np.argmax(counts))
    predictions = {s.subject_id: np.full(s.num_vertices, majority) for s in test_subjects}
    return build_report('baseline', num_labels, test_subjects, predictions)
