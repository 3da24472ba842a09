"""
ADMM solver for robust orthogonal NMF.

The model splits X = U Z^T A^T + E and minimizes

    ||E||_{2,phi} + lambda Tr(A^T L A) + mu Tr((A - Y)^T S (A - Y))

over U >= 0 with orthonormal columns, A >= 0, Z >= 0. Each outer iteration
updates U, A, Z, E and the multiplier Lambda in that order:

- U: projected gradient on the oblique manifold for the exact-penalty
  function f_sigma(U) = 1/2 ||W - U Z^T A^T||^2 + sigma_U (||Uv||^2 - 1)
- A: Sylvester equation (2 lambda L + 2 mu S) A + A (beta Z Z^T) = rhs,
  then projection onto A >= 0
- Z: normal equations (A^T A) Z = A^T W^T U, then projection onto Z >= 0
- E: row-wise proximal map of the penalty
- Lambda: Lambda - beta (X - U Z^T A^T - E)

where W = X - E - Lambda / beta.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .baselines import kmeans
from .errors import ContractViolation, NumericalAbort, SingularSystemError
from .graph import GraphContext
from .metrics import cluster_mapping
from .models import ClusteringResult, DataMatrix, Hyperparams, IterationRecord, PenaltySpec, SolverState, compose
from .penalty import phi, prox_rows, structured_norm

logger = logging.getLogger(__name__)

SYLVESTER_FLOOR = 1e-12
SYLVESTER_RIDGE = 1e-10
CONDITION_LIMIT = 1e12
KMEANS_RESTARTS = 10


@dataclass(frozen=True, eq=False)
class USubsolverConfig:
    """
    Settings of the U sub-solver.

    Attributes:
        ortho_penalty: Exact-penalty weight sigma_U (> 0)
        rank: Number of columns r of U
        eps1: Tolerance on ||min(U, grad f_sigma(U))||_F
        eps2: Tolerance on | ||Uv||^2 - 1 |
        max_inner_iters: Projected-gradient iterations per pass
        armijo_c: Sufficient-decrease constant in (0, 1)
        backtrack_ratio: Step shrink factor in (0, 1)
        initial_step: First trial step of every call
        max_backtracks: Trial steps before a pass gives up
        penalty_growth: Factor applied to sigma_U between passes
        max_penalty_rounds: Passes before the penalty stops growing
        orthogonal: False drops the exact penalty and the unit-column constraint
        v: The unit vector e / sqrt(r)
    """
    ortho_penalty: float
    rank: int
    eps1: float = 1e-4
    eps2: float = 1e-4
    max_inner_iters: int = 100
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 40
    penalty_growth: float = 10.0
    max_penalty_rounds: int = 5
    orthogonal: bool = True
    v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        """Validate the settings and build v."""
        if not self.ortho_penalty > 0:
            raise ContractViolation("ortho_penalty must be positive")
        if self.rank < 1:
            raise ContractViolation("rank must be a positive integer")
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ContractViolation("eps1 and eps2 must be positive")
        if self.max_inner_iters < 1:
            raise ContractViolation("max_inner_iters must be at least 1")
        if not 0 < self.armijo_c < 1:
            raise ContractViolation("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_ratio < 1:
            raise ContractViolation("backtrack_ratio must lie in (0, 1)")
        object.__setattr__(self, 'v', np.full(self.rank, 1.0 / np.sqrt(self.rank)))

    @classmethod
    def from_hyperparams(cls, hp: Hyperparams, data: DataMatrix) -> 'USubsolverConfig':
        return cls(
            ortho_penalty=hp.resolve_ortho_penalty(data),
            rank=hp.resolve_rank(data),
            eps1=hp.eps1,
            eps2=hp.eps2,
            max_inner_iters=hp.max_inner_iters,
            orthogonal=hp.orthogonal
        )


@dataclass(eq=False)
class UUpdate:
    """Outcome of update_u."""
    U: np.ndarray
    inner_iters: int
    stationarity: float
    constraint_gap: float
    accepted: bool
    flags: Tuple[str, ...] = ()


@dataclass(eq=False)
class BlockUpdate:
    """Outcome of update_a / update_z: the projected block and its unprojected solve."""
    value: np.ndarray
    unprojected: np.ndarray
    residual: float
    flags: Tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def working_matrix(X: np.ndarray, state: SolverState, beta: float) -> np.ndarray:
    """Return W = X - E - Lambda / beta."""
    return X - state.E - state.Lambda / beta


def resolve_penalty(spec: PenaltySpec, data: DataMatrix, hp: Hyperparams) -> PenaltySpec:
    """Return spec with its scale fixed, scale-matching an unset sigma to the data."""
    if spec.sigma is not None:
        return spec
    sigma = spec.resolve_sigma(data, hp.resolve_rank(data))
    logger.debug("penalty scale set to %.6g from the rank-%d residual", sigma, hp.resolve_rank(data))
    return spec.with_sigma(sigma)


def e_step_penalty(spec: PenaltySpec, beta: float) -> PenaltySpec:
    """Penalty whose proximal map is the E-step: the scale becomes sigma / beta."""
    return spec.with_sigma(spec.sigma / beta)


def residual_loss(E: np.ndarray, spec: PenaltySpec, beta: float) -> float:
    """
    The l2,phi loss of E as the E-step minimizes it.

    Equals sum_i phi_sigma(||E_i||) when beta = 1.
    """
    return beta * structured_norm(e_step_penalty(spec, beta), E)


def smoothness_term(A: np.ndarray, ctx: GraphContext) -> float:
    """Tr(A^T L A)."""
    return float(np.sum(A * (ctx.L @ A)))


def label_term(A: np.ndarray, ctx: GraphContext) -> float:
    """Tr((A - Y)^T S (A - Y))."""
    gap = A - ctx.Y
    return float(np.sum(gap * (ctx.S @ gap)))


def augmented_lagrangian(
    state: SolverState,
    X: np.ndarray,
    ctx: GraphContext,
    hp: Hyperparams,
    spec: PenaltySpec
) -> float:
    """
    Evaluate the augmented Lagrangian

        ||E||_{2,phi} + lambda Tr(A^T L A) + mu Tr((A - Y)^T S (A - Y))
        - <Lambda, X - U Z^T A^T - E> + beta / 2 ||X - U Z^T A^T - E||_F^2
    """
    R = X - compose(state.U, state.Z, state.A) - state.E
    return (
        residual_loss(state.E, spec, hp.beta)
        + hp.lam * smoothness_term(state.A, ctx)
        + hp.mu * label_term(state.A, ctx)
        - float(np.sum(state.Lambda * R))
        + 0.5 * hp.beta * float(np.sum(R * R))
    )


def feasibility(state: SolverState, X: np.ndarray) -> float:
    """Relative constraint violation ||X - U Z^T A^T - E||_F / ||X||_F."""
    scale = float(np.linalg.norm(X)) or 1.0
    return float(np.linalg.norm(X - compose(state.U, state.Z, state.A) - state.E)) / scale


def orthogonality(U: np.ndarray) -> float:
    """||U^T U - I||_F."""
    return float(np.linalg.norm(U.T @ U - np.eye(U.shape[1])))


def project_nonneg_orthogonal(U: np.ndarray) -> np.ndarray:
    """
    Map U to a non-negative matrix with orthonormal columns.

    Each row keeps only its largest entry; a column left empty takes over the
    row where it is largest among rows of columns that can spare one.
    """
    U = np.maximum(np.asarray(U, dtype=np.float64), 0.0)
    d, r = U.shape
    if r > d:
        raise ContractViolation(f"cannot fit {r} orthonormal columns in {d} rows")
    owner = np.argmax(U, axis=1)
    for j in range(r):
        if np.any(owner == j):
            continue
        counts = np.bincount(owner, minlength=r)
        spare = np.flatnonzero(counts[owner] > 1)
        row = spare[np.argmax(U[spare, j])]
        owner[row] = j

    P = np.zeros_like(U)
    rows = np.arange(d)
    P[rows, owner] = np.where(U[rows, owner] > 0, U[rows, owner], 0.0)
    for j in range(r):
        if not np.any(P[:, j] > 0):
            members = np.flatnonzero(owner == j)
            P[members[0], j] = 1.0
    return P / np.linalg.norm(P, axis=0)


def _ensure_finite(name: str, matrix: np.ndarray, iteration: int):
    if not np.all(np.isfinite(matrix)):
        raise NumericalAbort(
            f"non-finite values after the {name} update at iteration {iteration}", block=name, iteration=iteration
        )


# ---------------------------------------------------------------------------
# U block
# ---------------------------------------------------------------------------

def constraint_residual(U: np.ndarray, v: np.ndarray) -> float:
    """||Uv||^2 - 1."""
    Uv = U @ v
    return float(Uv @ Uv) - 1.0


def f_sigma(U: np.ndarray, W: np.ndarray, B: np.ndarray, sigma_u: float, v: np.ndarray) -> float:
    """1/2 ||W - U B^T||^2 + sigma_U (||Uv||^2 - 1), with B = A Z."""
    R = W - U @ B.T
    return 0.5 * float(np.sum(R * R)) + sigma_u * constraint_residual(U, v)


def euclidean_grad(U, W, Z, A, sigma_u: float, v: np.ndarray) -> np.ndarray:
    """Gradient of f_sigma: -(W - U Z^T A^T)(A Z) + 2 sigma_U (Uv) v^T."""
    B = A @ Z
    return -(W - U @ B.T) @ B + 2.0 * sigma_u * np.outer(U @ v, v)


def grad_f_sigma(U, W, Z, A, sigma_u: float, v: np.ndarray) -> np.ndarray:
    """Riemannian gradient G - U Diag(U^T G), G the Euclidean gradient."""
    if U.shape[0] != W.shape[0] or A.shape[0] != W.shape[1] or Z.shape != (A.shape[1], U.shape[1]):
        raise ContractViolation("inconsistent dimensions in grad_f_sigma")
    G = euclidean_grad(U, W, Z, A, sigma_u, v)
    return G - U * np.sum(U * G, axis=0)


def stationarity(U: np.ndarray, grad: np.ndarray) -> float:
    """||min(U, grad)||_F, zero exactly at KKT points of the projected problem."""
    return float(np.linalg.norm(np.minimum(U, grad)))


def _unit_columns(M: np.ndarray) -> Optional[np.ndarray]:
    P = np.maximum(M, 0.0)
    norms = np.linalg.norm(P, axis=0)
    if np.any(norms == 0):
        return None
    return P / norms


def _projected_gradient(
    U: np.ndarray,
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    retract: Callable[[np.ndarray], Optional[np.ndarray]],
    cfg: USubsolverConfig
) -> Tuple[np.ndarray, int, bool]:
    """
    Armijo projected gradient. Returns (U, iterations, stalled).

    A step is taken only when f(new) <= f(U) - c / step * ||new - U||^2, so the
    objective never increases.
    """
    value = objective(U)
    step = cfg.initial_step
    for t in range(cfg.max_inner_iters):
        grad = gradient(U)
        if stationarity(U, grad) <= cfg.eps1:
            return U, t, False
        for _ in range(cfg.max_backtracks):
            candidate = retract(U - step * grad)
            if candidate is not None:
                candidate_value = objective(candidate)
                move = float(np.sum((candidate - U) ** 2))
                if candidate_value <= value - cfg.armijo_c / step * move and move > 0:
                    break
            step *= cfg.backtrack_ratio
        else:
            return U, t, True
        U, value = candidate, candidate_value
        step /= cfg.backtrack_ratio
    return U, cfg.max_inner_iters, False


def update_u(state: SolverState, X: np.ndarray, beta: float, cfg: USubsolverConfig) -> UUpdate:
    """
    Update U by projected gradient on the exact-penalty function.

    Iterates keep unit-norm non-negative columns, so ||Uv||^2 >= 1 with
    equality exactly when U^T U = I. When a pass ends with ||Uv||^2 - 1 > eps2
    the penalty grows and another pass runs. The result replaces U^k only if
    neither f nor f_sigma increases and | ||Uv||^2 - 1 | <= eps2; otherwise U^k
    is kept and the update is reported as not accepted.
    """
    W = working_matrix(X, state, beta)
    B = state.A @ state.Z
    U0 = state.U
    v = cfg.v
    sigma0 = cfg.ortho_penalty

    def data_term(U):
        R = W - U @ B.T
        return 0.5 * float(np.sum(R * R))

    if not cfg.orthogonal:
        def plain_grad(U):
            return -(W - U @ B.T) @ B

        U, iters, _ = _projected_gradient(U0, data_term, plain_grad, lambda M: np.maximum(M, 0.0), cfg)
        measure = stationarity(U, plain_grad(U))
        return UUpdate(
            U=U,
            inner_iters=iters,
            stationarity=measure,
            constraint_gap=abs(constraint_residual(U, v)),
            accepted=True,
            flags=('u_inner_cap',) if measure > cfg.eps1 else ()
        )

    U = U0
    sigma = sigma0
    total = 0
    for _ in range(cfg.max_penalty_rounds):
        U, iters, _ = _projected_gradient(
            U,
            lambda M, s=sigma: f_sigma(M, W, B, s, v),
            lambda M, s=sigma: grad_f_sigma(M, W, state.Z, state.A, s, v),
            _unit_columns,
            cfg
        )
        total += iters
        if constraint_residual(U, v) <= cfg.eps2:
            break
        sigma *= cfg.penalty_growth

    f0 = data_term(U0)
    fs0 = f_sigma(U0, W, B, sigma0, v)
    slack = 1e-12 * (1.0 + abs(fs0))
    best, best_value = None, None
    for candidate in (U, project_nonneg_orthogonal(U)):
        if abs(constraint_residual(candidate, v)) > cfg.eps2:
            continue
        value = data_term(candidate)
        if value > f0 or f_sigma(candidate, W, B, sigma0, v) > fs0 + slack:
            continue
        if best is None or value < best_value:
            best, best_value = candidate, value

    flags: List[str] = []
    accepted = best is not None
    if not accepted:
        best = U0
        flags.append('u_rejected')
    measure = stationarity(best, grad_f_sigma(best, W, state.Z, state.A, sigma0, v))
    if measure > cfg.eps1:
        flags.append('u_inner_cap')
    return UUpdate(
        U=best,
        inner_iters=total,
        stationarity=measure,
        constraint_gap=abs(constraint_residual(best, v)),
        accepted=accepted,
        flags=tuple(flags)
    )


# ---------------------------------------------------------------------------
# A block
# ---------------------------------------------------------------------------

def solve_sylvester(P: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """
    Solve P A + A Q = R for symmetric positive semi-definite P (n x n) and Q (c x c).

    Both matrices are diagonalized; A = V_P [(V_P^T R V_Q)_ij / (p_i + q_j)] V_Q^T.
    Raises SingularSystemError when some p_i + q_j falls below 1e-12.
    """
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if P.shape != (R.shape[0], R.shape[0]) or Q.shape != (R.shape[1], R.shape[1]):
        raise ContractViolation(f"incompatible Sylvester shapes P{P.shape}, Q{Q.shape}, R{R.shape}")
    p, VP = scipy.linalg.eigh(P)
    q, VQ = scipy.linalg.eigh(Q)
    denominator = p[:, None] + q[None, :]
    if np.any(denominator < SYLVESTER_FLOOR):
        raise SingularSystemError("Sylvester system is singular", block='A')
    return VP @ ((VP.T @ R @ VQ) / denominator) @ VQ.T


def a_system(W, U, Z, ctx: GraphContext, lam: float, mu: float, beta: float):
    """
    Assemble the A-step stationarity condition P A + A Q = R with

        P = 2 lambda L + 2 mu S,  Q = beta Z Z^T,  R = beta W^T U Z^T + 2 mu S Y
    """
    P = 2.0 * lam * ctx.L + 2.0 * mu * ctx.S
    Q = beta * Z @ Z.T
    R = beta * W.T @ U @ Z.T + 2.0 * mu * ctx.S @ ctx.Y
    return P, Q, R


def solve_a_bar(W, U, Z, ctx: GraphContext, lam: float, mu: float, beta: float) -> BlockUpdate:
    """Solve the A-step Sylvester equation, regularizing Q when it is singular."""
    P, Q, R = a_system(W, U, Z, ctx, lam, mu, beta)
    flags: Tuple[str, ...] = ()
    try:
        A_bar = solve_sylvester(P, Q, R)
    except SingularSystemError:
        logger.warning("singular A-step system; adding %g I to beta Z Z^T", SYLVESTER_RIDGE)
        Q = Q + SYLVESTER_RIDGE * np.eye(Q.shape[0])
        A_bar = solve_sylvester(P, Q, R)
        flags = ('a_regularized',)
    scale = float(np.linalg.norm(R)) or 1.0
    residual = float(np.linalg.norm(P @ A_bar + A_bar @ Q - R)) / scale
    return BlockUpdate(value=np.maximum(A_bar, 0.0), unprojected=A_bar, residual=residual, flags=flags)


def update_a(state: SolverState, X: np.ndarray, ctx: GraphContext, hp: Hyperparams) -> BlockUpdate:
    """A^{k+1} = max(A_bar, 0), A_bar solving the Sylvester stationarity condition."""
    W = working_matrix(X, state, hp.beta)
    return solve_a_bar(W, state.U, state.Z, ctx, hp.lam, hp.mu, hp.beta)


# ---------------------------------------------------------------------------
# Z block
# ---------------------------------------------------------------------------

def solve_z_bar(W, U, A) -> BlockUpdate:
    """Z_bar = (A^T A)^{-1} A^T W^T U; minimum-norm least squares when A^T A is singular."""
    gram = A.T @ A
    rhs = A.T @ W.T @ U
    flags: Tuple[str, ...] = ()
    if np.linalg.cond(gram) < CONDITION_LIMIT:
        Z_bar = scipy.linalg.solve(gram, rhs, assume_a='sym')
    else:
        logger.warning("A^T A is rank deficient; using the least-squares Z")
        Z_bar = scipy.linalg.lstsq(A, W.T @ U)[0]
        flags = ('z_pseudoinverse',)
    scale = float(np.linalg.norm(rhs)) or 1.0
    residual = float(np.linalg.norm(gram @ Z_bar - rhs)) / scale
    return BlockUpdate(value=np.maximum(Z_bar, 0.0), unprojected=Z_bar, residual=residual, flags=flags)


def update_z(state: SolverState, X: np.ndarray, hp: Hyperparams) -> BlockUpdate:
    """Z^{k+1} = max(Z_bar, 0)."""
    W = working_matrix(X, state, hp.beta)
    return solve_z_bar(W, state.U, state.A)


# ---------------------------------------------------------------------------
# E and Lambda blocks
# ---------------------------------------------------------------------------

def e_target(state: SolverState, X: np.ndarray, beta: float) -> np.ndarray:
    """V = X - U Z^T A^T - Lambda / beta."""
    return X - compose(state.U, state.Z, state.A) - state.Lambda / beta


def update_e(state: SolverState, X: np.ndarray, beta: float, spec: PenaltySpec) -> np.ndarray:
    """E_i = prox_row(V_i) at penalty scale sigma / beta, for every row i."""
    return prox_rows(e_step_penalty(spec, beta), e_target(state, X, beta))


def e_row_objective(E: np.ndarray, V: np.ndarray, spec: PenaltySpec, beta: float) -> np.ndarray:
    """Per-row E-step objective beta/2 ||E_i - V_i||^2 + beta phi_{sigma/beta}(||E_i||)."""
    scaled = e_step_penalty(spec, beta)
    return 0.5 * beta * np.sum((E - V) ** 2, axis=1) + beta * phi(scaled, np.linalg.norm(E, axis=1))


def update_lambda(state: SolverState, X: np.ndarray, beta: float) -> np.ndarray:
    """Lambda^{k+1} = Lambda^k - beta (X - U Z^T A^T - E)."""
    return state.Lambda - beta * (X - compose(state.U, state.Z, state.A) - state.E)


# ---------------------------------------------------------------------------
# safeguards
# ---------------------------------------------------------------------------

def segment_step(
    objective: Callable[[np.ndarray], float],
    old: np.ndarray,
    candidate: np.ndarray
) -> Tuple[np.ndarray, float]:
    """
    Minimize a convex quadratic objective on the segment from old to candidate.

    Returns (point, t) with t in [0, 1]; t = 1 is preferred on ties and the
    value at the returned point never exceeds the value at old.
    """
    g0 = objective(old)
    g1 = objective(candidate)
    g_half = objective(0.5 * (old + candidate))
    curvature = 2.0 * (g1 - 2.0 * g_half + g0)
    slope = g1 - g0 - curvature

    trials = [(1.0, candidate, g1)]
    if curvature > 0:
        t = float(np.clip(-slope / (2.0 * curvature), 0.0, 1.0))
        if 0.0 < t < 1.0:
            point = old + t * (candidate - old)
            trials.append((t, point, objective(point)))
    trials.append((0.0, old, g0))
    t, point, _ = min(trials, key=lambda trial: trial[2])
    return point, t


def _a_objective(X, state: SolverState, ctx: GraphContext, hp: Hyperparams):
    W = working_matrix(X, state, hp.beta)
    UZ = state.U @ state.Z.T

    def objective(A):
        R = W - UZ @ A.T
        return (
            hp.lam * smoothness_term(A, ctx)
            + hp.mu * label_term(A, ctx)
            + 0.5 * hp.beta * float(np.sum(R * R))
        )
    return objective


def _z_objective(X, state: SolverState, hp: Hyperparams):
    W = working_matrix(X, state, hp.beta)

    def objective(Z):
        R = W - compose(state.U, Z, state.A)
        return 0.5 * hp.beta * float(np.sum(R * R))
    return objective


def _keep_better_rows(E_new, state: SolverState, X, spec: PenaltySpec, beta: float) -> Tuple[np.ndarray, int]:
    V = e_target(state, X, beta)
    worse = e_row_objective(E_new, V, spec, beta) > e_row_objective(state.E, V, spec, beta)
    if not np.any(worse):
        return E_new, 0
    E = E_new.copy()
    E[worse] = state.E[worse]
    return E, int(np.count_nonzero(worse))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def init_state(
    data: DataMatrix,
    ctx: GraphContext,
    hp: Hyperparams,
    strategy: str = 'kmeans'
) -> SolverState:
    """
    Build (U^0, A^0, Z^0, E^0, Lambda^0).

    kmeans: U from the centroids of the best of several k-means starts; A
    one-hot from its assignments (clusters renamed to the classes they best
    match on labeled samples), averaged with Y on labeled rows; Z the
    non-negative least-squares fit of X given U and A.
    random: U uniform, mapped onto the non-negative orthonormal set; A = Y plus
    0.1 * Uniform(0, 1) on unlabeled rows; Z uniform.
    Both set E = X - U Z^T A^T and Lambda = 0.
    """
    X = data.values
    d, n = X.shape
    r = hp.resolve_rank(data)
    c = ctx.c
    rng = np.random.default_rng(hp.seed)

    if strategy == 'random':
        U = project_nonneg_orthogonal(rng.uniform(size=(d, r)))
        A = ctx.Y.copy()
        unlabeled = ~ctx.labeled_mask
        A[unlabeled] += 0.1 * rng.uniform(size=(int(unlabeled.sum()), c))
        Z = rng.uniform(size=(c, r))
    elif strategy == 'kmeans':
        clusters = kmeans(X, c, seed=hp.seed, restarts=KMEANS_RESTARTS)
        assigned = clusters.labels
        if ctx.labeled_count:
            labeled = ctx.labeled_mask
            truth = np.argmax(ctx.Y[labeled], axis=1)
            assigned = cluster_mapping(assigned[labeled], truth, c)[assigned]
        A = np.zeros((n, c))
        A[np.arange(n), assigned] = 1.0
        A[ctx.labeled_mask] = 0.5 * A[ctx.labeled_mask] + 0.5 * ctx.Y[ctx.labeled_mask]
        if r == c:
            centroids = clusters.factors[0]
        else:
            centroids = kmeans(X, r, seed=hp.seed, restarts=KMEANS_RESTARTS).factors[0]
        U = project_nonneg_orthogonal(centroids + 1e-12)
        Z = solve_z_bar(X, U, A).value
    else:
        raise ContractViolation(f"unknown init strategy: {strategy!r}")

    E = X - compose(U, Z, A)
    return SolverState(U=U, A=A, Z=Z, E=E, Lambda=np.zeros_like(X))


def predict_labels(state: SolverState) -> np.ndarray:
    """Class of each sample: argmax of its row of A, lowest index on ties."""
    labels = np.argmax(state.A, axis=1)
    zero_rows = int(np.count_nonzero(~np.any(state.A > 0, axis=1)))
    if zero_rows:
        logger.warning("%d samples have an all-zero membership row; assigned to class 0", zero_rows)
        state.flags.append(f'zero_rows:{zero_rows}')
    return labels


def iterate(
    state: SolverState,
    data: DataMatrix,
    ctx: GraphContext,
    hp: Hyperparams,
    spec: PenaltySpec,
    cfg: USubsolverConfig
) -> SolverState:
    """Run one outer iteration U -> A -> Z -> E -> Lambda and append its record."""
    X = data.values
    spec = resolve_penalty(spec, data, hp)
    k = state.iter
    flags: List[str] = []
    deltas = {}

    def lagrangian(s):
        return augmented_lagrangian(s, X, ctx, hp, spec)

    before = lagrangian(state)
    factors_before = compose(state.U, state.Z, state.A)

    u_step = update_u(state, X, hp.beta, cfg)
    _ensure_finite('U', u_step.U, k)
    state = state.replace(U=u_step.U)
    flags.extend(u_step.flags)
    value = lagrangian(state)
    deltas['U'], current = value - before, value

    a_step = update_a(state, X, ctx, hp)
    _ensure_finite('A', a_step.unprojected, k)
    A, t_a = a_step.value, 1.0
    if hp.monotone:
        A, t_a = segment_step(_a_objective(X, state, ctx, hp), state.A, A)
    state = state.replace(A=A)
    flags.extend(a_step.flags)
    value = lagrangian(state)
    deltas['A'], current = value - current, value

    z_step = update_z(state, X, hp)
    _ensure_finite('Z', z_step.unprojected, k)
    Z, t_z = z_step.value, 1.0
    if hp.monotone:
        Z, t_z = segment_step(_z_objective(X, state, hp), state.Z, Z)
    state = state.replace(Z=Z)
    flags.extend(z_step.flags)
    value = lagrangian(state)
    deltas['Z'], current = value - current, value
    scale = float(np.linalg.norm(X)) or 1.0
    factor_change = float(np.linalg.norm(compose(state.U, state.Z, state.A) - factors_before)) / scale

    E = update_e(state, X, hp.beta, spec)
    _ensure_finite('E', E, k)
    if hp.monotone:
        E, kept = _keep_better_rows(E, state, X, spec, hp.beta)
        if kept:
            flags.append(f'e_rows_kept:{kept}')
    state = state.replace(E=E)
    value = lagrangian(state)
    deltas['E'], current = value - current, value

    Lambda = update_lambda(state, X, hp.beta)
    _ensure_finite('Lambda', Lambda, k)
    state = state.replace(Lambda=Lambda)
    value = lagrangian(state)
    deltas['Lambda'] = value - current

    record = IterationRecord(
        iteration=k,
        lagrangian=value,
        feasibility=feasibility(state, X),
        orthogonality=orthogonality(state.U),
        block_deltas=deltas,
        u_inner_iters=u_step.inner_iters,
        u_stationarity=u_step.stationarity,
        u_constraint_gap=u_step.constraint_gap,
        u_accepted=u_step.accepted,
        a_residual=a_step.residual,
        z_residual=z_step.residual,
        a_step=t_a,
        z_step=t_z,
        factor_change=factor_change,
        flags=tuple(flags)
    )
    state.trace.append(record)
    state.iter = k + 1
    logger.debug(
        "iteration %d: L=%.6g feasibility=%.3e orthogonality=%.3e",
        k, record.lagrangian, record.feasibility, record.orthogonality
    )
    if 'u_rejected' in flags or 'u_inner_cap' in flags:
        logger.debug("iteration %d: U sub-solver flags %s", k, [f for f in flags if f.startswith('u_')])
    return state


def fit(
    data: DataMatrix,
    ctx: GraphContext,
    hp: Hyperparams,
    spec: PenaltySpec,
    init_strategy: str = 'kmeans',
    state: Optional[SolverState] = None
) -> ClusteringResult:
    """
    Run the ADMM loop until both the relative feasibility and the relative
    change of U Z^T A^T over the last iteration are at most outer_tol, or
    max_outer_iters iterations have run.

    An unset penalty scale is matched to the data first (see
    PenaltySpec.resolve_sigma); the result carries the resolved penalty.

    Raises NumericalAbort naming the block and iteration if an iterate stops
    being finite.
    """
    if ctx.n != data.n:
        raise ContractViolation(f"graph has {ctx.n} nodes but the data has {data.n} samples")
    cfg = USubsolverConfig.from_hyperparams(hp, data)
    spec = resolve_penalty(spec, data, hp)
    logger.info("fitting %s with sigma=%.6g, %s start", spec.kind.value, spec.sigma, init_strategy)
    if state is None:
        state = init_state(data, ctx, hp, init_strategy)

    converged = False
    for _ in range(hp.max_outer_iters):
        state = iterate(state, data, ctx, hp, spec, cfg)
        record = state.trace[-1]
        if record.feasibility <= hp.outer_tol and record.factor_change <= hp.outer_tol:
            converged = True
            break

    capped = sum(1 for record in state.trace if 'u_inner_cap' in record.flags)
    if capped:
        logger.warning("U sub-solver hit its iteration cap in %d of %d iterations", capped, len(state.trace))
    return ClusteringResult(labels=predict_labels(state), state=state, converged=converged, penalty=spec)
