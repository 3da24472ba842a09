"""
Baseline clustering methods: NMF with multiplicative updates and k-means.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractViolation

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-12


@dataclass(eq=False)
class BaselineResult:
    """
    Output of a baseline method.

    Attributes:
        labels: Cluster index of every sample
        factors: (U, V) for NMF, (centroids, one-hot assignments) for k-means
        objective_trace: Objective after initialization and after every iteration
            (squared Frobenius error for NMF, within-cluster sum of squares for k-means)
    """
    labels: np.ndarray
    factors: Optional[Tuple[np.ndarray, np.ndarray]] = None
    objective_trace: List[float] = field(default_factory=list)


def nmf_multiplicative(X: np.ndarray, r: int, iters: int = 200, seed: Optional[int] = 0) -> BaselineResult:
    """
    Factor X ~ U V^T with Lee-Seung multiplicative updates.

    Labels are the argmax of each row of V.
    """
    X = np.asarray(X, dtype=np.float64)
    d, n = X.shape
    if np.any(X < 0):
        raise ContractViolation("NMF needs a non-negative matrix")
    if not 1 <= r <= min(d, n):
        raise ContractViolation(f"rank must lie in [1, {min(d, n)}], got {r}")

    rng = np.random.default_rng(seed)
    U = rng.uniform(size=(d, r))
    V = rng.uniform(size=(n, r))
    trace = [float(np.linalg.norm(X - U @ V.T) ** 2)]

    for _ in range(iters):
        V *= (X.T @ U) / np.maximum(V @ (U.T @ U), DENOMINATOR_FLOOR)
        U *= (X @ V) / np.maximum(U @ (V.T @ V), DENOMINATOR_FLOOR)
        trace.append(float(np.linalg.norm(X - U @ V.T) ** 2))

    return BaselineResult(labels=np.argmax(V, axis=1), factors=(U, V), objective_trace=trace)


def _plus_plus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = cdist(points, points[chosen], 'sqeuclidean').ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n, p=closest / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        closest = np.minimum(closest, cdist(points, points[[index]], 'sqeuclidean').ravel())
    return points[chosen].copy()


def _lloyd(points: np.ndarray, k: int, iters: int, rng: np.random.Generator):
    n = points.shape[0]
    centroids = _plus_plus_seeds(points, k, rng)
    distances = cdist(points, centroids, 'sqeuclidean')
    labels = np.argmin(distances, axis=1)
    trace = [float(distances[np.arange(n), labels].sum())]

    for _ in range(iters):
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
                continue
            own = distances[np.arange(n), labels]
            farthest = int(np.argmax(own))
            logger.debug("re-seeding empty cluster %d at sample %d", j, farthest)
            centroids[j] = points[farthest]
            labels[farthest] = j
            distances[farthest] = 0.0

        distances = cdist(points, centroids, 'sqeuclidean')
        new_labels = np.argmin(distances, axis=1)
        trace.append(float(distances[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    else:
        # iteration cap: refresh the centroids to the means of the last assignment
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
        trace.append(float(np.sum((points - centroids[labels]) ** 2)))
    return labels, centroids, trace


def kmeans(
    X_columns: np.ndarray,
    k: int,
    iters: int = 100,
    seed: Optional[int] = 0,
    restarts: int = 1
) -> BaselineResult:
    """
    Lloyd's k-means on the columns of X with k-means++ seeding.

    An empty cluster is re-seeded at the point farthest from its centroid.
    With restarts > 1 the run ending with the smallest within-cluster sum of
    squares is kept; every start draws from the same seeded generator.
    """
    points = np.asarray(X_columns, dtype=np.float64).T
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ContractViolation(f"k must lie in [1, {n}], got {k}")
    if restarts < 1:
        raise ContractViolation(f"restarts must be at least 1, got {restarts}")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        run = _lloyd(points, k, iters, rng)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    labels, centroids, trace = best

    assignments = np.zeros((n, k))
    assignments[np.arange(n), labels] = 1.0
    return BaselineResult(labels=labels, factors=(centroids.T.copy(), assignments), objective_trace=trace)
