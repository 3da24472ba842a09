"""
Affinity graph and label structures.

The kNN graph connects each sample to its nearest neighbours (union
symmetrization); its Laplacian L = D - W feeds the smoothness term
Tr(A^T L A). The label matrix Y and indicator S come from a stratified draw of
a fraction p of each class and feed the propagation term
Tr((A - Y)^T S (A - Y)).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractViolation, DataError
from .models import DataMatrix, Hyperparams, UNLABELED

logger = logging.getLogger(__name__)


class WeightScheme(str, Enum):
    BINARY = "binary"
    HEAT = "heat"


@dataclass(frozen=True, eq=False)
class GraphContext:
    """
    Graph and label information the solver needs.

    Attributes:
        W: n x n symmetric non-negative weights with a zero diagonal
        D: n x n diagonal degree matrix
        L: n x n Laplacian D - W
        Y: n x c one-hot rows for labeled samples, zero rows otherwise
        S: n x n diagonal 0/1 label indicator
        labeled_mask: Boolean vector, True for labeled samples
    """
    W: np.ndarray
    D: np.ndarray
    L: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    labeled_mask: np.ndarray

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def c(self) -> int:
        return self.Y.shape[1]

    @property
    def labeled_count(self) -> int:
        return int(np.count_nonzero(self.labeled_mask))


def build_knn_graph(
    data: DataMatrix,
    knn: int = 5,
    scheme: WeightScheme = WeightScheme.BINARY,
    bandwidth: Optional[float] = None
) -> np.ndarray:
    """
    Build the symmetric kNN weight matrix over the samples (columns) of X.

    j is linked to i when j is among the knn Euclidean nearest neighbours of i
    or i among those of j. Distance ties go to the lower index.
    """
    scheme = WeightScheme(scheme)
    n = data.n
    if not 1 <= knn < n:
        raise ContractViolation(f"knn must satisfy 1 <= knn < n ({n}), got {knn}")
    if scheme is WeightScheme.HEAT and (bandwidth is None or not bandwidth > 0):
        raise ContractViolation("the heat kernel needs a positive bandwidth")

    points = data.values.T
    distances = cdist(points, points, 'sqeuclidean')
    np.fill_diagonal(distances, np.inf)
    neighbours = np.argsort(distances, axis=1, kind='stable')[:, :knn]

    linked = np.zeros((n, n), dtype=bool)
    linked[np.repeat(np.arange(n), knn), neighbours.ravel()] = True
    linked |= linked.T

    if scheme is WeightScheme.BINARY:
        W = linked.astype(np.float64)
    else:
        W = np.where(linked, np.exp(-distances / bandwidth ** 2), 0.0)
    np.fill_diagonal(W, 0.0)
    return W


def laplacian(W: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return the degree matrix D and the Laplacian L = D - W."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ContractViolation("W must be a square matrix")
    if not np.allclose(W, W.T, rtol=0.0, atol=1e-12):
        raise ContractViolation("W must be symmetric")
    if np.any(W < 0):
        raise ContractViolation("W must be non-negative")
    if np.any(np.diag(W) != 0):
        raise ContractViolation("W must have a zero diagonal")
    D = np.diag(W.sum(axis=1))
    return D, D - W


def labeled_count(fraction: float, class_size: int) -> int:
    """Number of samples labeled in a class: ceil(p * n_j), robust to rounding."""
    return int(math.ceil(round(fraction * class_size, 9)))


def build_label_structures(
    data: DataMatrix,
    p: float,
    seed: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Draw ceil(p * n_j) labeled samples from every class j.

    Returns:
        Tuple (Y, S, labeled_mask)
    """
    if data.labels is None:
        raise DataError("label structures need ground-truth labels")
    if not 0 < p <= 1:
        raise ContractViolation("p must lie in (0, 1]")

    rng = np.random.default_rng(seed)
    n, c = data.n, data.c
    mask = np.zeros(n, dtype=bool)
    Y = np.zeros((n, c))
    for j in range(c):
        members = np.flatnonzero(data.labels == j)
        if members.size == 0:
            raise DataError(f"class {j} has no samples")
        chosen = rng.choice(members, size=labeled_count(p, members.size), replace=False)
        mask[chosen] = True
        Y[chosen, j] = 1.0

    ignored = int(np.count_nonzero(data.labels == UNLABELED))
    if ignored:
        logger.debug("%d samples carry no ground truth and stay unlabeled", ignored)
    return Y, np.diag(mask.astype(np.float64)), mask


def build_context(
    data: DataMatrix,
    hp: Hyperparams,
    scheme: WeightScheme = WeightScheme.BINARY,
    bandwidth: Optional[float] = None,
    label_seed: Optional[int] = None
) -> GraphContext:
    """Build the graph and label structures for a solver run."""
    W = build_knn_graph(data, hp.knn, scheme, bandwidth)
    D, L = laplacian(W)
    seed = hp.seed if label_seed is None else label_seed
    Y, S, mask = build_label_structures(data, hp.labeled_fraction, seed)
    logger.debug("graph: %d edges, %d labeled samples", int(np.count_nonzero(W)) // 2, int(mask.sum()))
    return GraphContext(W=W, D=D, L=L, Y=Y, S=S, labeled_mask=mask)
