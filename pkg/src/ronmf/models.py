"""
Data models for the ronmf library.

This module defines the core entities shared by every other module:
- DataMatrix: the d x n non-negative observation matrix with optional labels
- Hyperparams: regularization weights, tolerances and iteration limits
- PenaltySpec: the non-convex penalty applied to residual rows
- SolverState: the ADMM iterate (U, A, Z, E, Lambda) and its trace
- MetricReport, ClusteringResult, RepetitionResult, ResultsRecord: what a fit,
  its evaluation and an experiment produce

It also provides reconstruct() and validate().
"""

import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple
from uuid import uuid4

import numpy as np

from .errors import ContractViolation, DataError

LIBRARY_VERSION = "0.1.0"

# Label value marking a sample whose class is unknown.
UNLABELED = -1

# Open parameter bounds are rejected within this distance.
BOUND_MARGIN = 1e-6


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """
    The observation matrix X, one sample per column.

    Attributes:
        values: d x n array of feature intensities (features x samples)
        labels: Optional length-n integer array; UNLABELED marks unknown samples
        c: Number of classes; inferred from labels when omitted
    """
    values: np.ndarray
    labels: Optional[np.ndarray] = None
    c: Optional[int] = None

    def __post_init__(self):
        """Coerce arrays and check the structural shape of the data."""
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ContractViolation("DataMatrix values must be a 2-D array")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            if labels.ndim != 1 or labels.shape[0] != values.shape[1]:
                raise ContractViolation(
                    f"labels must have one entry per sample ({values.shape[1]}), got shape {labels.shape}"
                )
            labels.setflags(write=False)
            object.__setattr__(self, 'labels', labels)
            if self.c is None:
                known = labels[labels != UNLABELED]
                object.__setattr__(self, 'c', int(known.max()) + 1 if known.size else 0)
        if self.c is not None:
            object.__setattr__(self, 'c', int(self.c))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def with_values(self, values: np.ndarray) -> 'DataMatrix':
        """Return a copy holding new values and the same labels."""
        return DataMatrix(values=values, labels=self.labels, c=self.c)

    def select_samples(self, index: np.ndarray) -> 'DataMatrix':
        """Return the sub-matrix made of the given sample columns."""
        labels = None if self.labels is None else self.labels[index]
        return DataMatrix(values=self.values[:, index], labels=labels, c=self.c)

    def to_dict(self) -> dict:
        """Convert the data matrix to a dictionary."""
        return {
            'values': self.values.tolist(),
            'labels': None if self.labels is None else self.labels.tolist(),
            'c': self.c
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'DataMatrix':
        """Create a DataMatrix from a dictionary."""
        return cls(values=np.array(data['values']), labels=data.get('labels'), c=data.get('c'))


@dataclass(frozen=True)
class Violation:
    """One broken DataMatrix invariant."""
    kind: str
    message: str
    location: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(); empty violations means the data is valid."""
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        """Raise a DataError describing the first violation, if any."""
        if self.violations:
            first = self.violations[0]
            position = None if first.location is None else f"cell {first.location}"
            extra = len(self.violations) - 1
            suffix = f" and {extra} more violation(s)" if extra else ""
            raise DataError(f"{first.message}{suffix}", position=position)


def validate(data: DataMatrix) -> ValidationReport:
    """
    Check every DataMatrix invariant and report all violations.

    Never raises; callers decide what to do with the report.
    """
    violations: List[Violation] = []
    values = data.values

    if data.d < 1:
        violations.append(Violation('shape', f"need at least 1 feature row, got {data.d}"))
    if data.n < 2:
        violations.append(Violation('shape', f"need at least 2 samples, got {data.n}"))

    for row, col in zip(*np.nonzero(~np.isfinite(values))):
        violations.append(Violation('non_finite', f"entry ({row}, {col}) is not finite", (int(row), int(col))))
    with np.errstate(invalid='ignore'):
        negative = np.isfinite(values) & (values < 0)
    for row, col in zip(*np.nonzero(negative)):
        violations.append(Violation(
            'negative', f"entry ({row}, {col}) is negative: {values[row, col]!r}", (int(row), int(col))
        ))

    if data.labels is not None:
        c = data.c or 0
        if c < 2:
            violations.append(Violation('classes', f"labeled data needs at least 2 classes, got {c}"))
        bad = (data.labels != UNLABELED) & ((data.labels < 0) | (data.labels >= c))
        for index in np.nonzero(bad)[0]:
            violations.append(Violation(
                'label', f"label out of range: sample {index} has label {data.labels[index]} (c={c})", (int(index),)
            ))

    return ValidationReport(tuple(violations))


class PenaltyKind(str, Enum):
    """Non-convex penalties with closed-form proximal maps."""
    MCP = "MCP"
    SCAD = "SCAD"
    ETP = "ETP"


_DEFAULT_TAU = {PenaltyKind.MCP: 3.0, PenaltyKind.SCAD: 3.7}
_DEFAULT_GAMMA = 2.0


@dataclass(frozen=True)
class PenaltySpec:
    """
    Which non-convex penalty phi_sigma to use and its shape parameters.

    Attributes:
        kind: MCP, SCAD or ETP
        sigma: Penalty scale (> 0); None scales it to the data, see resolve_sigma()
        tau: Shape parameter for MCP (> 1) and SCAD (> 2); defaulted per kind
        gamma: Decay rate for ETP (> 0)
    """
    kind: PenaltyKind = PenaltyKind.ETP
    sigma: Optional[float] = None
    tau: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        """Validate the parameter ranges of the chosen penalty."""
        try:
            kind = PenaltyKind(str(self.kind).upper() if not isinstance(self.kind, PenaltyKind) else self.kind)
        except ValueError:
            raise ContractViolation(f"Unknown penalty kind: {self.kind!r}") from None
        object.__setattr__(self, 'kind', kind)

        if self.sigma is not None:
            if not self.sigma > 0 or not math.isfinite(self.sigma):
                raise ContractViolation("Penalty sigma must be a positive finite number")
            object.__setattr__(self, 'sigma', float(self.sigma))

        if kind in _DEFAULT_TAU:
            tau = _DEFAULT_TAU[kind] if self.tau is None else float(self.tau)
            bound = 1.0 if kind is PenaltyKind.MCP else 2.0
            if not tau > bound + BOUND_MARGIN:
                raise ContractViolation(f"{kind.value} requires tau > {bound:g}, got {tau!r}")
            object.__setattr__(self, 'tau', tau)
        if kind is PenaltyKind.ETP:
            gamma = _DEFAULT_GAMMA if self.gamma is None else float(self.gamma)
            if not gamma > 0:
                raise ContractViolation(f"ETP requires gamma > 0, got {gamma!r}")
            object.__setattr__(self, 'gamma', gamma)

    @classmethod
    def mcp(cls, sigma: Optional[float] = None, tau: Optional[float] = None) -> 'PenaltySpec':
        return cls(PenaltyKind.MCP, sigma=sigma, tau=tau)

    @classmethod
    def scad(cls, sigma: Optional[float] = None, tau: Optional[float] = None) -> 'PenaltySpec':
        return cls(PenaltyKind.SCAD, sigma=sigma, tau=tau)

    @classmethod
    def etp(cls, sigma: Optional[float] = None, gamma: Optional[float] = None) -> 'PenaltySpec':
        return cls(PenaltyKind.ETP, sigma=sigma, gamma=gamma)

    def with_sigma(self, sigma: float) -> 'PenaltySpec':
        """Return the same penalty at another scale."""
        return replace(self, sigma=sigma)

    def resolve_sigma(self, data: DataMatrix, rank: int) -> float:
        """
        Return sigma, scale-matching it to the data when unset.

        The data scale is the median row norm of X minus its best rank-r
        approximation, so inlier residual rows sit near the penalty scale and
        rows far above tau * sigma are left to E.
        """
        if self.sigma is not None:
            return self.sigma
        X = data.values
        if not np.all(np.isfinite(X)):
            return 1.0
        left, values, right = np.linalg.svd(X, full_matrices=False)
        residual = X - (left[:, :rank] * values[:rank]) @ right[:rank]
        scale = float(np.median(np.linalg.norm(residual, axis=1)))
        return scale if scale > 1e-12 * max(float(np.linalg.norm(X)), 1.0) else 1.0

    def to_dict(self) -> dict:
        """Convert the penalty spec to a dictionary."""
        return {'kind': self.kind.value, 'sigma': self.sigma, 'tau': self.tau, 'gamma': self.gamma}

    @classmethod
    def from_dict(cls, data: dict) -> 'PenaltySpec':
        """Create a PenaltySpec from a dictionary."""
        return cls(
            kind=PenaltyKind(data['kind']),
            sigma=data.get('sigma'),
            tau=data.get('tau'),
            gamma=data.get('gamma')
        )


@dataclass(frozen=True)
class Hyperparams:
    """
    Solver hyperparameters.

    Attributes:
        lam: Graph regularization weight lambda (>= 0)
        mu: Label propagation weight (>= 0)
        beta: ADMM penalty parameter (> 0)
        rank: Factor rank r; None means r = c
        labeled_fraction: Fraction p of each class used as labeled samples
        knn: Neighbour count of the affinity graph
        max_outer_iters: Cap on ADMM iterations (0 returns the initialization)
        outer_tol: Relative feasibility at which the ADMM loop stops
        eps1: Stationarity tolerance of the U sub-solver
        eps2: Tolerance on | ||Uv||^2 - 1 | of the U sub-solver
        ortho_penalty: Exact-penalty weight sigma_U; None means 10 * ||X||_F / (d n)
        seed: Random seed of the initialization and label sampling
        max_inner_iters: Cap on U sub-solver iterations per pass
        monotone: Safeguard projected updates so no block raises the Lagrangian
        orthogonal: Enforce U^T U = I through the exact penalty
    """
    lam: float = 1000.0
    mu: float = 1.0
    beta: float = 1.0
    rank: Optional[int] = None
    labeled_fraction: float = 0.3
    knn: int = 5
    max_outer_iters: int = 200
    outer_tol: float = 1e-5
    eps1: float = 1e-4
    eps2: float = 1e-4
    ortho_penalty: Optional[float] = None
    seed: int = 0
    max_inner_iters: int = 100
    monotone: bool = True
    orthogonal: bool = True

    def __post_init__(self):
        """Validate the hyperparameter ranges."""
        if self.lam < 0:
            raise ContractViolation("lambda cannot be negative")
        if self.mu < 0:
            raise ContractViolation("mu cannot be negative")
        if not self.beta > 0:
            raise ContractViolation("beta must be positive")
        if self.rank is not None and self.rank < 1:
            raise ContractViolation("rank must be a positive integer")
        if not 0 < self.labeled_fraction <= 1:
            raise ContractViolation("labeled_fraction must lie in (0, 1]")
        if self.knn < 1:
            raise ContractViolation("knn must be at least 1")
        if self.max_outer_iters < 0:
            raise ContractViolation("max_outer_iters cannot be negative")
        if self.max_inner_iters < 1:
            raise ContractViolation("max_inner_iters must be at least 1")
        for name in ('outer_tol', 'eps1', 'eps2'):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.ortho_penalty is not None and not self.ortho_penalty > 0:
            raise ContractViolation("ortho_penalty must be positive")

    def resolve_rank(self, data: DataMatrix) -> int:
        """Return the factor rank for this data, checking r <= min(d, n)."""
        rank = self.rank if self.rank is not None else data.c
        if not rank:
            raise ContractViolation("rank is unset and the data has no class count")
        if rank > min(data.d, data.n):
            raise ContractViolation(f"rank {rank} exceeds min(d, n) = {min(data.d, data.n)}")
        return int(rank)

    def resolve_ortho_penalty(self, data: DataMatrix) -> float:
        """Return sigma_U, scale-matching it to the data when unset."""
        if self.ortho_penalty is not None:
            return float(self.ortho_penalty)
        scale = 10.0 * float(np.linalg.norm(data.values)) / (data.d * data.n)
        return scale if scale > 0 else 1.0

    def with_overrides(self, **changes) -> 'Hyperparams':
        """Return a copy with some fields replaced."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """Convert the hyperparameters to a dictionary keyed by their public names."""
        return {
            'lambda': self.lam,
            'mu': self.mu,
            'beta': self.beta,
            'rank': self.rank,
            'labeled_fraction': self.labeled_fraction,
            'knn': self.knn,
            'max_outer_iters': self.max_outer_iters,
            'outer_tol': self.outer_tol,
            'eps1': self.eps1,
            'eps2': self.eps2,
            'ortho_penalty': self.ortho_penalty,
            'seed': self.seed,
            'max_inner_iters': self.max_inner_iters,
            'monotone': self.monotone,
            'orthogonal': self.orthogonal
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Hyperparams':
        """Create Hyperparams from a dictionary produced by to_dict()."""
        values = dict(data)
        if 'lambda' in values:
            values['lam'] = values.pop('lambda')
        return cls(**values)


@dataclass(frozen=True)
class IterationRecord:
    """
    Diagnostics of one ADMM iteration.

    block_deltas holds the change of the augmented Lagrangian caused by each
    block update ('U', 'A', 'Z', 'E', 'Lambda'); the primal entries are never
    positive beyond rounding when the monotone safeguard is on.
    factor_change is ||U Z^T A^T - previous U Z^T A^T||_F / ||X||_F, the
    dual residual of the stopping rule.
    """
    iteration: int
    lagrangian: float
    feasibility: float
    orthogonality: float
    block_deltas: Dict[str, float]
    u_inner_iters: int
    u_stationarity: float
    u_constraint_gap: float
    u_accepted: bool
    a_residual: float
    z_residual: float
    a_step: float
    z_step: float
    factor_change: float = 0.0
    flags: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        """Convert the record to a dictionary."""
        return {
            'iteration': self.iteration,
            'lagrangian': self.lagrangian,
            'feasibility': self.feasibility,
            'orthogonality': self.orthogonality,
            'block_deltas': dict(self.block_deltas),
            'u_inner_iters': self.u_inner_iters,
            'u_stationarity': self.u_stationarity,
            'u_constraint_gap': self.u_constraint_gap,
            'u_accepted': self.u_accepted,
            'a_residual': self.a_residual,
            'z_residual': self.z_residual,
            'a_step': self.a_step,
            'z_step': self.z_step,
            'factor_change': self.factor_change,
            'flags': list(self.flags)
        }


@dataclass(eq=False)
class SolverState:
    """
    The ADMM iterate.

    Attributes:
        U: d x r non-negative basis matrix
        A: n x c non-negative membership matrix
        Z: c x r non-negative auxiliary matrix
        E: d x n residual matrix
        Lambda: d x n multiplier matrix
        iter: Number of completed outer iterations
        trace: One IterationRecord per completed iteration
        flags: Run-level warnings (e.g. zero rows met by predict_labels)
    """
    U: np.ndarray
    A: np.ndarray
    Z: np.ndarray
    E: np.ndarray
    Lambda: np.ndarray
    iter: int = 0
    trace: List[IterationRecord] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def copy(self) -> 'SolverState':
        """Return a deep copy of the matrices and trace."""
        return SolverState(
            U=self.U.copy(), A=self.A.copy(), Z=self.Z.copy(), E=self.E.copy(), Lambda=self.Lambda.copy(),
            iter=self.iter, trace=list(self.trace), flags=list(self.flags)
        )

    def replace(self, **blocks) -> 'SolverState':
        """Return a state with some blocks swapped, sharing the trace list."""
        return SolverState(
            U=blocks.get('U', self.U), A=blocks.get('A', self.A), Z=blocks.get('Z', self.Z),
            E=blocks.get('E', self.E), Lambda=blocks.get('Lambda', self.Lambda),
            iter=self.iter, trace=self.trace, flags=self.flags
        )


def compose(U: np.ndarray, Z: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Return U Z^T A^T after checking U is d x r, Z is c x r and A is n x c."""
    if U.ndim != 2 or Z.ndim != 2 or A.ndim != 2:
        raise ContractViolation("factors must be 2-D arrays")
    if U.shape[1] != Z.shape[1]:
        raise ContractViolation(f"U has {U.shape[1]} columns but Z has {Z.shape[1]}")
    if A.shape[1] != Z.shape[0]:
        raise ContractViolation(f"A has {A.shape[1]} columns but Z has {Z.shape[0]} rows")
    return U @ (A @ Z).T


def reconstruct(state: SolverState) -> np.ndarray:
    """Return the low-rank reconstruction U Z^T A^T of the current iterate."""
    return compose(state.U, state.Z, state.A)


@dataclass(frozen=True)
class MetricReport:
    """
    Clustering agreement between predicted and true labels.

    Attributes:
        acc: Best-matching accuracy
        f1: Pairwise F1
        nmi: Normalized mutual information (max-entropy normalization)
        pur: Purity
        confusion: Square contingency table, true classes by predicted clusters
    """
    acc: float
    f1: float
    nmi: float
    pur: float
    confusion: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        """Validate the metric ranges."""
        for name in ('acc', 'f1', 'nmi', 'pur'):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1 + 1e-12:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")

    def as_row(self) -> Dict[str, float]:
        return {'acc': self.acc, 'f1': self.f1, 'nmi': self.nmi, 'pur': self.pur}

    def to_dict(self) -> dict:
        """Convert the report to a dictionary."""
        row: Dict[str, Any] = self.as_row()
        row['confusion'] = [list(r) for r in self.confusion]
        return row

    @classmethod
    def from_dict(cls, data: dict) -> 'MetricReport':
        """Create a MetricReport from a dictionary."""
        return cls(
            acc=data['acc'], f1=data['f1'], nmi=data['nmi'], pur=data['pur'],
            confusion=tuple(tuple(int(v) for v in r) for r in data.get('confusion', ()))
        )


@dataclass(eq=False)
class ClusteringResult:
    """
    Output of a solver run.

    Attributes:
        labels: Predicted class of every sample
        state: Final iterate with its full trace
        converged: Whether the stopping rule was met
        metrics: Agreement with the ground truth, when it was computed
        penalty: The penalty the run used, with its scale resolved
    """
    labels: np.ndarray
    state: SolverState
    converged: bool
    metrics: Optional[MetricReport] = None
    penalty: Optional[PenaltySpec] = None

    @property
    def U(self) -> np.ndarray:
        return self.state.U

    @property
    def A(self) -> np.ndarray:
        return self.state.A

    @property
    def Z(self) -> np.ndarray:
        return self.state.Z

    @property
    def trace(self) -> List[IterationRecord]:
        return self.state.trace

    @property
    def iterations(self) -> int:
        return self.state.iter

    @property
    def final_feasibility(self) -> float:
        return self.trace[-1].feasibility if self.trace else float('nan')


@dataclass(frozen=True)
class RepetitionResult:
    """
    One method's outcome on one repetition of an experiment.

    metrics is None when evaluation is switched off. seconds is wall time; it
    is kept apart from the deterministic fields.
    """
    repetition: int
    seed: int
    metrics: Optional[MetricReport]
    iterations: int
    feasibility: Optional[float]
    seconds: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        """Convert the result to a dictionary."""
        data = {
            'repetition': self.repetition,
            'seed': self.seed,
            'metrics': None if self.metrics is None else self.metrics.to_dict(),
            'iterations': self.iterations,
            'feasibility': self.feasibility
        }
        if include_timing:
            data['seconds'] = self.seconds
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'RepetitionResult':
        """Create a RepetitionResult from a dictionary."""
        return cls(
            repetition=data['repetition'],
            seed=data['seed'],
            metrics=None if data.get('metrics') is None else MetricReport.from_dict(data['metrics']),
            iterations=data['iterations'],
            feasibility=data.get('feasibility'),
            seconds=data.get('seconds', 0.0)
        )


METRIC_NAMES = ('acc', 'f1', 'nmi', 'pur')


def mean_std(values: List[float]) -> Tuple[float, float]:
    """Return the mean and sample standard deviation (0 for a single value)."""
    if not values:
        return float('nan'), float('nan')
    array = np.asarray(values, dtype=np.float64)
    std = float(np.std(array, ddof=1)) if array.size > 1 else 0.0
    return float(np.mean(array)), std


@dataclass(eq=True)
class ResultsRecord:
    """
    Everything an experiment produced.

    Attributes:
        config: Echo of the ExperimentConfig as a dictionary
        library_version: Version of ronmf that produced the record
        methods: Per-method list of RepetitionResult, in repetition order
        id: Unique identifier used by the results store
        created_at: Timestamp of the record
    """
    config: Dict[str, Any]
    library_version: str = LIBRARY_VERSION
    methods: Dict[str, List[RepetitionResult]] = field(default_factory=dict)
    id: str = field(default_factory=lambda: str(uuid4()), compare=False)
    created_at: datetime = field(default_factory=datetime.now, compare=False)

    def summary(self, method: str) -> Dict[str, Dict[str, float]]:
        """Return mean and sample std of each metric for a method."""
        results = self.methods.get(method, [])
        summary = {}
        for name in METRIC_NAMES:
            mean, std = mean_std([getattr(r.metrics, name) for r in results if r.metrics is not None])
            summary[name] = {'mean': mean, 'std': std}
        return summary

    def to_dict(self, include_timing: bool = True) -> dict:
        """
        Convert the record to a dictionary.

        Wall times live in a separate 'timing' object so the rest of the
        dictionary is reproducible bit for bit.
        """
        data: Dict[str, Any] = {
            'config': self.config,
            'library_version': self.library_version,
            'methods': {
                name: {
                    'repetitions': [r.to_dict(include_timing=False) for r in results],
                    'summary': self.summary(name)
                }
                for name, results in self.methods.items()
            }
        }
        if include_timing:
            data['timing'] = {name: [r.seconds for r in results] for name, results in self.methods.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ResultsRecord':
        """Create a ResultsRecord from a dictionary produced by to_dict()."""
        timing = data.get('timing', {})
        methods = {}
        for name, block in data.get('methods', {}).items():
            seconds = timing.get(name, [])
            results = []
            for index, item in enumerate(block['repetitions']):
                item = dict(item)
                if index < len(seconds):
                    item['seconds'] = seconds[index]
                results.append(RepetitionResult.from_dict(item))
            methods[name] = results
        return cls(config=data['config'], library_version=data['library_version'], methods=methods)
