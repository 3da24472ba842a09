"""
Robust orthogonal NMF

Semi-supervised clustering by non-negative matrix factorization with an
orthogonal basis, graph and label regularization and a non-convex row-wise
loss, solved by ADMM.
"""

from .errors import ConfigError, ContractViolation, DataError, ExperimentError, NumericalAbort, RonmfError
from .graph import build_context
from .metrics import evaluate
from .models import (
    LIBRARY_VERSION,
    ClusteringResult,
    DataMatrix,
    Hyperparams,
    MetricReport,
    PenaltySpec,
    ResultsRecord,
    SolverState,
    validate,
)
from .solver import fit, predict_labels

__version__ = LIBRARY_VERSION

__all__ = [
    "DataMatrix",
    "Hyperparams",
    "PenaltySpec",
    "SolverState",
    "ClusteringResult",
    "MetricReport",
    "ResultsRecord",
    "validate",
    "build_context",
    "fit",
    "predict_labels",
    "evaluate",
    "RonmfError",
    "ContractViolation",
    "ConfigError",
    "DataError",
    "NumericalAbort",
    "ExperimentError",
]
