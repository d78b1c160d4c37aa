"""
Two-stage training.

Stage 1 minimizes the coarse NLL. Stage 2 minimizes NLL - lam * Dice of the
refined output and also fine-tunes the coarse network at its own (small)
learning rate. Each epoch takes one SGD step per subject, visiting the
subjects in a seeded shuffled order.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from surfparc.ai.losses import dice_score, hard_dice, one_hot, softmax_backward, softmax_nll
from surfparc.ai.network import COARSE, REFINE, ParcellationModel
from surfparc.ai.optim import SgdState, sgd_step
from surfparc.ai.subject import Subject
from surfparc.errors import DataError, NumericError
from surfparc.run_config import ScheduleConfig
from surfparc.utils.metrics_log import EpochMetrics, MetricsLog

logger = logging.getLogger(__name__)


@dataclass
class StageLoss:
    loss: float
    nll: float
    dice: float
    hard_dice: float


@dataclass
class TrainingResult:
    model: ParcellationModel
    metrics: List[EpochMetrics] = field(default_factory=list)
    optimizers: Dict[str, SgdState] = field(default_factory=dict)


def _check_loss(value: float, stage: str, epoch: int, subject: Subject):
    if not np.isfinite(value):
        raise NumericError('non-finite training loss',
                           {'stage': stage, 'epoch': epoch, 'subject': subject.subject_id})


def coarse_step(model: ParcellationModel, subject: Subject) -> StageLoss:
    """Forward + backward of the coarse NLL for one subject."""
    out, cache = model.coarse.forward(subject)
    nll, prob, grad = softmax_nll(out.logits, subject.labels)
    model.coarse.backward(cache, grad)
    dice = hard_dice(subject.labels, np.argmax(prob, axis=1), model.num_labels)
    return StageLoss(loss=nll, nll=nll, dice=dice, hard_dice=dice)


def refine_step(model: ParcellationModel, subject: Subject, lam: float) -> StageLoss:
    """Forward + backward of NLL - lam * Dice through refinement and coarse networks."""
    out, coarse_cache = model.coarse.forward(subject)
    logits, refine_cache = model.refine.forward(subject, out.penultimate, out.mid)
    nll, prob, grad_nll = softmax_nll(logits, subject.labels)
    dice, grad_prob = dice_score(one_hot(subject.labels, model.num_labels), prob, validate=False)
    grad_logits = grad_nll - lam * softmax_backward(prob, grad_prob)
    grad_penultimate, grad_mid = model.refine.backward(refine_cache, grad_logits)
    model.coarse.backward(coarse_cache, None, grad_penultimate, grad_mid)
    hard = hard_dice(subject.labels, np.argmax(prob, axis=1), model.num_labels)
    return StageLoss(loss=nll - lam * dice, nll=nll, dice=dice, hard_dice=hard)


def _optimizer(lr: float, schedule: ScheduleConfig, steps_per_epoch: int) -> SgdState:
    return SgdState(lr, schedule.decay_factor, schedule.decay_interval * steps_per_epoch,
                    schedule.momentum)


def train_two_stage(model: ParcellationModel, subjects: Sequence[Subject], schedule: ScheduleConfig,
                    lam: Optional[float] = None, metrics_log: Optional[MetricsLog] = None,
                    on_stage_end: Optional[Callable[[str, TrainingResult], None]] = None
                    ) -> TrainingResult:
    """
    Train the coarse network, then the refinement network jointly with it.

    Every epoch visits the subjects in a seeded shuffled order and takes one SGD
    step per subject.

    Args:
        model: Model to train in place.
        subjects: Labelled training subjects.
        schedule: Learning rates, momentum, decay and epoch counts.
        lam: Dice weight of the refinement loss (defaults to the model's run config).
        metrics_log: Optional file receiving one record per epoch.
        on_stage_end: Called with (stage, result) after each completed stage.

    Returns:
        TrainingResult with per-epoch metrics and final optimizer states.
    """
    if not subjects:
        raise DataError('cannot train on an empty dataset')
    for subject in subjects:
        if subject.labels is None:
            raise DataError(f'subject {subject.subject_id} has no labels')
    lam = model.run_config.lam if lam is None else lam
    order_rng = np.random.default_rng([model.run_config.seed, len(subjects)])
    result = TrainingResult(model)

    coarse_opt = _optimizer(schedule.coarse_lr, schedule, len(subjects))
    result.optimizers['coarse'] = coarse_opt
    model.stage = COARSE
    logger.info(f"🚀 Stage 1: {schedule.coarse_epochs} epochs on {len(subjects)} subjects")
    for epoch in range(1, schedule.coarse_epochs + 1):
        losses = []
        for index in order_rng.permutation(len(subjects)):
            subject = subjects[index]
            model.zero_grad()
            step = coarse_step(model, subject)
            _check_loss(step.loss, COARSE, epoch, subject)
            sgd_step(model.coarse.parameters(), coarse_opt)
            losses.append(step)
        record = EpochMetrics(epoch, COARSE, float(np.mean([s.loss for s in losses])),
                              float(np.mean([s.hard_dice for s in losses])))
        _record(result, metrics_log, record)
    if on_stage_end is not None:
        on_stage_end(COARSE, result)

    if schedule.refine_epochs == 0:
        return result

    finetune_opt = _optimizer(schedule.refine_coarse_lr, schedule, len(subjects))
    refine_opt = _optimizer(schedule.refine_lr, schedule, len(subjects))
    result.optimizers['finetune'] = finetune_opt
    result.optimizers['refine'] = refine_opt
    model.stage = REFINE
    logger.info(f"🚀 Stage 2: {schedule.refine_epochs} epochs, lambda={lam}")
    for epoch in range(1, schedule.refine_epochs + 1):
        losses = []
        for index in order_rng.permutation(len(subjects)):
            subject = subjects[index]
            model.zero_grad()
            step = refine_step(model, subject, lam)
            _check_loss(step.loss, REFINE, epoch, subject)
            sgd_step(model.coarse.parameters(), finetune_opt)
            sgd_step(model.refine.parameters(), refine_opt)
            losses.append(step)
        record = EpochMetrics(epoch, REFINE, float(np.mean([s.loss for s in losses])),
                              float(np.mean([s.hard_dice for s in losses])),
                              nll=float(np.mean([s.nll for s in losses])),
                              dice_loss=float(np.mean([s.dice for s in losses])))
        _record(result, metrics_log, record)
    if on_stage_end is not None:
        on_stage_end(REFINE, result)
    return result


def _record(result: TrainingResult, metrics_log: Optional[MetricsLog], record: EpochMetrics):
    result.metrics.append(record)
    if metrics_log is not None:
        metrics_log.append(record)
    logger.info(f"📈 {record.stage} epoch {record.epoch}: loss={record.loss:.4f} dice={record.dice:.4f}")
