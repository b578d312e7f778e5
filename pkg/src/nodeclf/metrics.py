"""Evaluation metrics: classification accuracy and rank-based ROC-AUC."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, UndefinedMetricError


def accuracy(logits: np.ndarray, labels, mask) -> float:
    """Fraction of masked nodes whose argmax matches the true class.

    Ties go to the lowest class index on both sides (argmax convention).
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise InputError("accuracy mask is empty")
    pred = np.argmax(logits[mask], axis=1)
    truth = np.argmax(labels.y[mask], axis=1)
    return float(np.mean(pred == truth))


def roc_auc(scores: np.ndarray, labels01: np.ndarray, mask) -> float:
    """Rank-based AUC with average ranks for ties (Mann-Whitney form)."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise InputError("roc_auc mask is empty")
    s = np.asarray(scores, dtype=np.float64)[mask]
    y = np.asarray(labels01)[mask]
    pos = int(np.sum(y == 1))
    neg = int(np.sum(y == 0))
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes in the mask")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def roc_auc_multilabel(scores: np.ndarray, labels_pm1: np.ndarray, mask) -> float:
    """Unweighted mean of per-column AUC; labels are +-1 per column."""
    scores = np.asarray(scores, dtype=np.float64)
    labels01 = (np.asarray(labels_pm1) > 0).astype(np.int64)
    if scores.ndim != 2 or scores.shape != labels01.shape:
        raise InputError("scores and labels must be matching 2-D arrays")
    cols = [
        roc_auc(scores[:, t], labels01[:, t], mask) for t in range(scores.shape[1])
    ]
    return float(np.mean(cols))
