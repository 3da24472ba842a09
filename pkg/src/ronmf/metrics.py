"""
Clustering evaluation: accuracy under the best label matching, pairwise F1,
normalized mutual information and purity.

All four are invariant to renaming the predicted clusters or the true classes.
"""

from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import linear_sum_assignment
from scipy.stats import entropy
from sklearn.metrics import mutual_info_score
from sklearn.metrics.cluster import contingency_matrix

from .errors import ContractViolation
from .models import MetricReport


def _as_labels(pred: ArrayLike, truth: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ContractViolation(f"label vectors differ in length: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ContractViolation("label vectors are empty")
    return pred, truth


def square_contingency(pred: ArrayLike, truth: ArrayLike) -> np.ndarray:
    """Contingency counts, true classes by predicted clusters, zero-padded to a square."""
    pred, truth = _as_labels(pred, truth)
    table = contingency_matrix(truth, pred)
    k = max(table.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[:table.shape[0], :table.shape[1]] = table
    return padded


def hungarian_assignment(cost: ArrayLike) -> np.ndarray:
    """
    Return the permutation minimizing the total assignment cost.

    perm[i] is the column matched to row i.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ContractViolation("cost must be a square matrix")
    if not np.all(np.isfinite(cost)):
        raise ContractViolation("cost must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def accuracy(pred: ArrayLike, truth: ArrayLike) -> float:
    """Fraction of samples matched after the best renaming of predicted clusters."""
    table = square_contingency(pred, truth)
    perm = hungarian_assignment(-table)
    return float(table[np.arange(table.shape[0]), perm].sum() / table.sum())


def _pairs(counts: np.ndarray) -> int:
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def pairwise_f1(pred: ArrayLike, truth: ArrayLike) -> float:
    """
    F1 over unordered sample pairs.

    A pair is positive when the prediction puts both samples in one cluster and
    correct when the truth does too. Returns 0 when precision + recall is 0.
    """
    table = square_contingency(pred, truth)
    together = _pairs(table)
    predicted_together = _pairs(table.sum(axis=0))
    truly_together = _pairs(table.sum(axis=1))
    precision = together / predicted_together if predicted_together else 0.0
    recall = together / truly_together if truly_together else 0.0
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def nmi(pred: ArrayLike, truth: ArrayLike) -> float:
    """
    Mutual information divided by the larger marginal entropy.

    Returns 0 when both entropies vanish (single-cluster inputs).
    """
    pred, truth = _as_labels(pred, truth)
    # canonical argument order makes nmi(a, b) == nmi(b, a) bit for bit
    first, second = sorted((pred, truth), key=lambda labels: labels.tobytes())
    h_first = entropy(np.unique(first, return_counts=True)[1])
    h_second = entropy(np.unique(second, return_counts=True)[1])
    h_max = max(h_first, h_second)
    if h_max <= 0:
        return 0.0
    value = mutual_info_score(first, second) / h_max
    return float(min(max(value, 0.0), 1.0))


def purity(pred: ArrayLike, truth: ArrayLike) -> float:
    """Share of samples belonging to the majority class of their predicted cluster."""
    table = square_contingency(pred, truth)
    return float(table.max(axis=0).sum() / table.sum())


def evaluate(pred: ArrayLike, truth: ArrayLike) -> MetricReport:
    """Compute all four metrics and the contingency table."""
    table = square_contingency(pred, truth)
    return MetricReport(
        acc=accuracy(pred, truth),
        f1=pairwise_f1(pred, truth),
        nmi=nmi(pred, truth),
        pur=purity(pred, truth),
        confusion=tuple(tuple(int(v) for v in row) for row in table)
    )


def cluster_mapping(pred: ArrayLike, truth: ArrayLike, k: int) -> np.ndarray:
    """
    Best one-to-one renaming of clusters 0..k-1 onto classes 0..k-1.

    mapping[j] is the class given to cluster j; the mapping is a permutation.
    """
    pred, truth = _as_labels(pred, truth)
    if np.any((pred < 0) | (pred >= k)) or np.any((truth < 0) | (truth >= k)):
        raise ContractViolation(f"labels must lie in [0, {k})")
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return hungarian_assignment(-table)


def align_clusters(pred: ArrayLike, truth: ArrayLike, k: int) -> np.ndarray:
    """Rename predicted clusters 0..k-1 to the classes they best match."""
    mapping = cluster_mapping(pred, truth, k)
    return mapping[np.asarray(pred).ravel()]
