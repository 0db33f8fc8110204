"""Group-robustness evaluation metrics.

Three accuracy aggregates: worst (min over groups), weighted average
(weights fixed to the TRAIN-split group proportions even on balanced
eval splits), and mean (plain arithmetic mean over groups).  Binary
AUROC uses rank sums with average ranks on ties, i.e. the exact
P(score+ > score-) + 0.5 P(tie).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .group_state import loss_vector

__all__ = ["GroupMetrics", "group_accuracy", "auroc", "loss_gap"]


@dataclass(frozen=True)
class GroupMetrics:
    per_group_accuracy: np.ndarray
    worst: float
    weighted_average: float
    mean: float
    weights_used: np.ndarray


def group_accuracy(predictions, labels, groups, train_weights) -> GroupMetrics:
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    gid = np.asarray(groups, dtype=np.int64)
    w = np.asarray(train_weights, dtype=np.float64)
    if not (pred.shape == lab.shape == gid.shape):
        raise ValueError("predictions, labels and groups must have equal length")
    if w.ndim != 1 or np.min(w) < 0 or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("train_weights must be a distribution over the groups")
    k = w.size
    if gid.size and (gid.min() < 0 or gid.max() >= k):
        raise ValueError("group ids out of range")
    counts = np.bincount(gid, minlength=k)
    if np.any(counts == 0):
        missing = int(np.nonzero(counts == 0)[0][0])
        raise ValueError(f"group {missing} has no samples")
    correct = np.bincount(gid, weights=(pred == lab).astype(np.float64), minlength=k)
    acc = correct / counts
    return GroupMetrics(
        per_group_accuracy=acc,
        worst=float(acc.min()),
        weighted_average=float(acc @ w),
        mean=float(acc.mean()),
        weights_used=w,
    )


def auroc(scores, binary_labels) -> float:
    """Area under the ROC curve from rank sums, ties get average ranks."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(binary_labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j < s.size and sorted_s[j] == sorted_s[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)  # average of 1-based ranks i+1 .. j
        i = j
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def loss_gap(losses) -> float:
    """Spread max - min of the group losses; 0 means perfectly balanced."""
    l = loss_vector(losses)
    return float(l.max() - l.min())
