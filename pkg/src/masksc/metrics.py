"""Clustering quality measures: accuracy, NMI and pairwise (binary) accuracy."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import relabel
from .errors import InvalidInputError


def _pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise InvalidInputError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    return pred, truth


def contingency(pred, truth) -> np.ndarray:
    """Counts ``n[a, b]`` of samples with predicted class ``a`` and true class ``b``."""
    pred, truth = _pair(pred, truth)
    p, _ = relabel(pred)
    t, _ = relabel(truth)
    table = np.zeros((p.max(initial=-1) + 1, t.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred, truth) -> float:
    """Best fraction of matches over one-to-one relabelings of ``pred``."""
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise InvalidInputError("empty label vectors")
    table = contingency(pred, truth)
    k = max(table.shape)
    square = np.zeros((k, k), dtype=np.int64)
    square[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(-square)
    return float(square[rows, cols].sum() / pred.size)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth, average: str = "geometric") -> float:
    """Normalized mutual information (natural log).

    ``average`` selects the normalizer: ``"geometric"`` for ``sqrt(H_p H_t)``
    or ``"arithmetic"`` for ``(H_p + H_t) / 2``.  Two single-cluster
    partitions score 1; exactly one single-cluster partition scores 0.
    """
    pred, truth = _pair(pred, truth)
    n = pred.size
    if n == 0:
        raise InvalidInputError("empty label vectors")
    table = contingency(pred, truth).astype(np.float64)
    hp = _entropy(table.sum(1), n)
    ht = _entropy(table.sum(0), n)
    if hp == 0.0 and ht == 0.0:
        return 1.0
    if hp == 0.0 or ht == 0.0:
        return 0.0
    joint = table / n
    outer = np.outer(table.sum(1), table.sum(0)) / (n * n)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    if average == "geometric":
        denom = np.sqrt(hp * ht)
    elif average == "arithmetic":
        denom = (hp + ht) / 2.0
    else:
        raise InvalidInputError(f"unknown NMI normalization {average!r}")
    return float(min(max(mi / denom, 0.0), 1.0))


def bca(pred, truth) -> float:
    """Fraction of unordered pairs whose same/different-cluster status agrees.

    Counted from the contingency table rather than by enumerating pairs.
    """
    pred, truth = _pair(pred, truth)
    n = pred.size
    if n < 2:
        raise InvalidInputError("BCA needs at least two samples")
    table = contingency(pred, truth)

    def pairs(c):
        c = np.asarray(c, dtype=np.int64)
        return int(np.sum(c * (c - 1) // 2))

    both_same = pairs(table)
    pred_same = pairs(table.sum(1))
    truth_same = pairs(table.sum(0))
    total = n * (n - 1) // 2
    both_diff = total - pred_same - truth_same + both_same
    return (both_same + both_diff) / total
