"""
Softmax, negative log-likelihood and the multi-class Dice score.
"""
from typing import Tuple

import numpy as np

from surfparc.errors import ContractViolation

DICE_EPS = 1e-7
ROW_SUM_TOL = 1e-6


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(labels: np.ndarray, num_labels: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((len(labels), num_labels))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _check_labels(labels: np.ndarray, num_labels: int):
    if labels.size and (labels.min() < 0 or labels.max() >= num_labels):
        raise ContractViolation(f'labels must lie in [0, {num_labels}), got range '
                                f'[{labels.min()}, {labels.max()}]')


def softmax_nll(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Mean negative log-likelihood of the true labels.

    Returns:
        (loss, probabilities N x L, gradient wrt logits N x L)
    """
    n, num_labels = logits.shape
    labels = np.asarray(labels)
    if len(labels) != n:
        raise ContractViolation(f'{len(labels)} labels for {n} logit rows')
    _check_labels(labels, num_labels)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_prob = z - log_norm[:, None]
    prob = np.exp(log_prob)
    rows = np.arange(n)
    loss = float(-log_prob[rows, labels].mean())
    grad = prob.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, prob, grad


def softmax_backward(prob: np.ndarray, grad_prob: np.ndarray) -> np.ndarray:
    """Chain a gradient wrt softmax probabilities back to the logits."""
    return prob * (grad_prob - np.sum(grad_prob * prob, axis=1, keepdims=True))


def _check_rows(name: str, matrix: np.ndarray):
    sums = matrix.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        bad = int(np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0])
        raise ContractViolation(f'{name} row {bad} sums to {sums[bad]!r}, expected 1')


def dice_score(truth: np.ndarray, pred: np.ndarray, eps: float = DICE_EPS,
               validate: bool = True) -> Tuple[float, np.ndarray]:
    """
    Multi-class Dice averaged over labels, with its gradient wrt `pred`.

    D = (1/L) * sum_l 2 * sum_i g_il p_il / (sum_i (g_il + p_il) + eps)

    Args:
        truth: N x L ground-truth probability rows.
        pred: N x L predicted probability rows.
        eps: Guard for labels absent from both.
        validate: Check that rows sum to one.
    """
    if truth.shape != pred.shape:
        raise ContractViolation(f'Dice inputs differ in shape: {truth.shape} vs {pred.shape}')
    if validate:
        _check_rows('ground truth', truth)
        _check_rows('prediction', pred)
    num_labels = truth.shape[1]
    overlap = np.sum(truth * pred, axis=0)
    denom = np.sum(truth + pred, axis=0) + eps
    score = float(np.mean(2.0 * overlap / denom))
    grad = (2.0 * truth / denom - 2.0 * overlap / denom ** 2) / num_labels
    return score, grad


def region_dice(truth_labels: np.ndarray, pred_labels: np.ndarray, num_labels: int,
                eps: float = DICE_EPS) -> np.ndarray:
    """Per-label Dice of hard label maps (one-hot rows)."""
    truth_labels = np.asarray(truth_labels)
    pred_labels = np.asarray(pred_labels)
    _check_labels(truth_labels, num_labels)
    _check_labels(pred_labels, num_labels)
    overlap = np.bincount(truth_labels[truth_labels == pred_labels], minlength=num_labels)
    sizes = np.bincount(truth_labels, minlength=num_labels) + np.bincount(pred_labels, minlength=num_labels)
    return 2.0 * overlap / (sizes + eps)


def hard_dice(truth_labels: np.ndarray, pred_labels: np.ndarray, num_labels: int) -> float:
    return float(region_dice(truth_labels, pred_labels, num_labels).mean())
