"""
Prediction export: labels, probabilities and a VTK mesh for external viewers.
"""
import logging
import os
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from surfparc.ai.network import ParcellationModel, predict
from surfparc.ai.subject import Subject
from surfparc.utils.mesh_io import atomic_write, write_labels, write_vtk

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExportPaths:
    labels: str
    probabilities: str
    mesh: str


def write_probabilities(probs: np.ndarray, path: str):
    atomic_write(path, [' '.join(repr(float(p)) for p in row) + '\n' for row in probs])


def export_predictions(model: ParcellationModel, subject: Subject, out_dir: str,
                       stage: Optional[str] = None) -> ExportPaths:
    started = time.perf_counter()
    labels, probs = predict(model, subject, stage)
    logger.debug(f"⏱️ {subject.subject_id}: inference {time.perf_counter() - started:.3f}s")
    paths = ExportPaths(
        labels=os.path.join(out_dir, f'{subject.subject_id}.pred.labels.txt'),
        probabilities=os.path.join(out_dir, f'{subject.subject_id}.pred.probs.txt'),
        mesh=os.path.join(out_dir, f'{subject.subject_id}.pred.vtk'),
    )
    write_labels(labels, paths.labels)
    write_probabilities(probs, paths.probabilities)
    write_vtk(subject.mesh, paths.mesh, labels=labels, scalars={'confidence': probs.max(axis=1)},
              title=f'{subject.subject_id} parcellation')
    logger.info(f"📁 Exported {subject.subject_id} predictions to {out_dir}")
    return paths
