"""Discrimination metrics: rank-based AUC and the ROC curve.

auc() is the Mann-Whitney statistic computed from tied ranks, so a tied
positive/negative pair contributes exactly 0.5; the trapezoidal area under
roc_curve() agrees with it to float precision, which the tests pin down.
"""
from __future__ import annotations

import numpy as np


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1 or scores.shape != labels.shape:
        raise ValueError(
            f"auc: scores and labels must be equal-length 1-D, got {scores.shape} and {labels.shape}"
        )
    if scores.size == 0:
        raise ValueError("auc: empty input")
    if not np.isfinite(scores).all():
        raise ValueError("auc: scores contain non-finite values")
    lab = labels.astype(np.float64)
    if not np.isin(lab, (0.0, 1.0)).all():
        raise ValueError("auc: labels must be 0 or 1")
    lab = lab.astype(np.int64)
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        missing = "positive" if n_pos == 0 else "negative"
        raise ValueError(f"auc: undefined with no {missing} examples")
    return scores, lab, n_pos, n_neg


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties at 0.5."""
    scores, lab, n_pos, n_neg = _validate(scores, labels)
    n = scores.size
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank of the tie run
        i = j + 1
    pos_rank_sum = float(ranks[lab == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, labels):
    """(fpr, tpr, thresholds) sweeping the distinct scores from high to low.

    Starts at (0, 0) and ends at (1, 1); tied scores advance TP and FP
    together, producing the diagonal segments whose trapezoids reproduce the
    0.5 tie credit of auc().
    """
    scores, lab, n_pos, n_neg = _validate(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = lab[order]
    distinct = np.flatnonzero(np.diff(s)) + 1
    bounds = np.concatenate([distinct, [s.size]])  # cumulative count after each threshold
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(1 - y)
    tpr = np.concatenate([[0.0], tp_cum[bounds - 1] / n_pos])
    fpr = np.concatenate([[0.0], fp_cum[bounds - 1] / n_neg])
    thresholds = np.concatenate([[np.inf], s[bounds - 1]])
    return fpr, tpr, thresholds


def roc_auc_trapezoid(scores, labels) -> float:
    """Area under roc_curve() by the trapezoid rule (cross-check for auc)."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.trapz(tpr, fpr))
