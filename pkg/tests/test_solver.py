"""
Unit and integration tests for the ADMM solver.
"""

import numpy as np
import pytest

from src.ronmf.baselines import nmf_multiplicative
from src.ronmf.dataio import generate_synthetic
from src.ronmf.errors import ContractViolation, NumericalAbort, SingularSystemError
from src.ronmf.graph import build_context
from src.ronmf.metrics import evaluate
from src.ronmf.models import DataMatrix, Hyperparams, PenaltySpec, SolverState, compose
from src.ronmf.noise import salt_pepper_corrupt
from src.ronmf.penalty import phi_value
from src.ronmf.solver import (
    USubsolverConfig,
    a_system,
    augmented_lagrangian,
    constraint_residual,
    e_row_objective,
    e_target,
    euclidean_grad,
    f_sigma,
    feasibility,
    fit,
    grad_f_sigma,
    init_state,
    iterate,
    label_term,
    orthogonality,
    predict_labels,
    project_nonneg_orthogonal,
    residual_loss,
    segment_step,
    smoothness_term,
    solve_a_bar,
    solve_sylvester,
    solve_z_bar,
    update_a,
    update_e,
    update_lambda,
    update_u,
    update_z,
    working_matrix,
)


ALL_KINDS = [PenaltySpec.mcp(), PenaltySpec.scad(), PenaltySpec.etp()]


@pytest.fixture
def blobs():
    """Three classes of 20 samples in 12 dimensions."""
    return generate_synthetic(3, 20, 12, separation=3.0, seed=0)


@pytest.fixture
def hp():
    return Hyperparams(knn=5, seed=3)


@pytest.fixture
def ctx(blobs, hp):
    return build_context(blobs, hp)


@pytest.fixture
def block_basis():
    """A 6 x 2 non-negative basis with disjoint column supports."""
    U = np.zeros((6, 2))
    U[:3, 0] = [1.0, 2.0, 2.0]
    U[3:, 1] = [2.0, 1.0, 2.0]
    return U / 3.0


def exact_state(U, rng, n=8, c=2):
    """A state whose working matrix is exactly U Z^T A^T."""
    A = rng.uniform(0.1, 1.0, size=(n, c))
    Z = rng.uniform(0.1, 1.0, size=(c, U.shape[1]))
    X = compose(U, Z, A)
    return SolverState(U=U, A=A, Z=Z, E=np.zeros_like(X), Lambda=np.zeros_like(X)), X


class TestProjection:
    """Test cases for the map onto non-negative orthonormal columns."""

    def test_result_is_orthonormal(self):
        rng = np.random.default_rng(0)

        P = project_nonneg_orthogonal(rng.uniform(size=(10, 4)))

        assert np.all(P >= 0)
        assert orthogonality(P) <= 1e-12

    def test_empty_column_takes_a_row(self):
        """Test that a column owning no row is still given one."""
        U = np.array([[1.0, 0.5], [1.0, 0.2], [1.0, 0.1]])

        P = project_nonneg_orthogonal(U)

        assert orthogonality(P) <= 1e-12
        assert P[0, 1] == 1.0

    def test_too_many_columns(self):
        with pytest.raises(ContractViolation):
            project_nonneg_orthogonal(np.ones((2, 3)))


class TestUBlock:
    """Test cases for the exact-penalty U sub-problem."""

    def test_constraint_residual_vanishes_on_orthonormal_columns(self, block_basis):
        cfg = USubsolverConfig(ortho_penalty=1.0, rank=2)

        assert constraint_residual(block_basis, cfg.v) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("seed", range(20))
    def test_euclidean_grad_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        d, n, c, r = rng.integers(3, 8), rng.integers(4, 10), rng.integers(1, 4), rng.integers(1, 3)
        U, W = rng.uniform(size=(d, r)), rng.uniform(size=(d, n))
        A, Z = rng.uniform(size=(n, c)), rng.uniform(size=(c, r))
        v = np.full(r, 1.0 / np.sqrt(r))
        sigma_u = rng.uniform(0.1, 2.0)
        h = 1e-6

        G = euclidean_grad(U, W, Z, A, sigma_u, v)

        numeric = np.zeros_like(U)
        for index in np.ndindex(*U.shape):
            step = np.zeros_like(U)
            step[index] = h
            numeric[index] = (
                f_sigma(U + step, W, A @ Z, sigma_u, v) - f_sigma(U - step, W, A @ Z, sigma_u, v)
            ) / (2 * h)
        np.testing.assert_allclose(G, numeric, rtol=1e-5, atol=1e-5)

    def test_riemannian_grad_is_tangent(self):
        """Test that u_j^T grad_j = 0 for unit columns."""
        rng = np.random.default_rng(12)
        U = rng.uniform(size=(5, 2))
        U /= np.linalg.norm(U, axis=0)
        W, A, Z = rng.uniform(size=(5, 6)), rng.uniform(size=(6, 3)), rng.uniform(size=(3, 2))

        grad = grad_f_sigma(U, W, Z, A, 2.0, np.full(2, 1.0 / np.sqrt(2.0)))

        np.testing.assert_allclose(np.sum(U * grad, axis=0), 0.0, atol=1e-12)

    def test_grad_rejects_bad_shapes(self):
        with pytest.raises(ContractViolation):
            grad_f_sigma(np.ones((5, 2)), np.ones((4, 6)), np.ones((3, 2)), np.ones((6, 3)), 1.0, np.ones(2))

    def test_fixed_point_is_returned_unchanged(self, block_basis):
        """Test that an exact factorization with orthonormal U is left alone."""
        state, X = exact_state(block_basis, np.random.default_rng(4))
        cfg = USubsolverConfig(ortho_penalty=1.0, rank=2)

        result = update_u(state, X, 1.0, cfg)

        np.testing.assert_array_equal(result.U, block_basis)
        assert result.accepted
        assert result.inner_iters == 0
        assert result.flags == ()

    def test_single_column_reaches_the_sphere_optimum(self):
        """Test that for r = 1 the optimum is max(W b, 0) / ||max(W b, 0)||."""
        rng = np.random.default_rng(21)
        X = rng.uniform(size=(5, 8))
        A, Z = rng.uniform(size=(8, 2)), rng.uniform(size=(2, 1))
        U0 = rng.uniform(size=(5, 1))
        U0 /= np.linalg.norm(U0)
        state = SolverState(U=U0, A=A, Z=Z, E=np.zeros_like(X), Lambda=np.zeros_like(X))
        cfg = USubsolverConfig(ortho_penalty=1.0, rank=1, eps1=1e-10, max_inner_iters=2000)

        result = update_u(state, X, 1.0, cfg)

        target = np.maximum(X @ (A @ Z), 0.0)
        target /= np.linalg.norm(target)
        assert result.accepted
        np.testing.assert_allclose(result.U, target, atol=1e-6)

    def test_data_term_never_increases(self, blobs, ctx, hp):
        state = init_state(blobs, ctx, hp)
        cfg = USubsolverConfig.from_hyperparams(hp, blobs)
        X = blobs.values

        def data_term(U):
            R = X - state.E - state.Lambda / hp.beta - compose(U, state.Z, state.A)
            return 0.5 * float(np.sum(R * R))

        result = update_u(state, X, hp.beta, cfg)

        assert data_term(result.U) <= data_term(state.U) + 1e-9
        if result.accepted:
            assert result.constraint_gap <= cfg.eps2

    def test_plain_non_negative_update(self, block_basis):
        rng = np.random.default_rng(8)
        state, X = exact_state(block_basis, rng)
        state = state.replace(U=rng.uniform(size=block_basis.shape))
        cfg = USubsolverConfig(ortho_penalty=1.0, rank=2, orthogonal=False)

        result = update_u(state, X, 1.0, cfg)

        assert result.accepted
        assert np.all(result.U >= 0)
        assert np.linalg.norm(X - compose(result.U, state.Z, state.A)) <= np.linalg.norm(
            X - compose(state.U, state.Z, state.A)
        )

    @pytest.mark.parametrize("changes", [
        {'armijo_c': 1.5},
        {'backtrack_ratio': 0.0},
        {'max_inner_iters': 0},
        {'ortho_penalty': 0.0},
    ])
    def test_config_validation(self, changes):
        settings = {'ortho_penalty': 1.0, 'rank': 2}
        settings.update(changes)

        with pytest.raises(ContractViolation):
            USubsolverConfig(**settings)


class TestSylvester:
    """Test cases for the eigen-decomposition Sylvester solver."""

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_kronecker_solution(self, seed):
        rng = np.random.default_rng(seed)
        n, c = int(rng.integers(2, 12)), int(rng.integers(1, 5))
        M, N = rng.normal(size=(n, n)), rng.normal(size=(c, c))
        P, Q = M @ M.T + np.eye(n), N @ N.T
        R = rng.normal(size=(n, c))

        A = solve_sylvester(P, Q, R)

        K = np.kron(np.eye(c), P) + np.kron(Q.T, np.eye(n))
        expected = np.linalg.solve(K, R.ravel(order='F')).reshape((n, c), order='F')
        np.testing.assert_allclose(A, expected, rtol=1e-8, atol=1e-8 * np.abs(expected).max())

    def test_singular_system(self):
        with pytest.raises(SingularSystemError):
            solve_sylvester(np.zeros((2, 2)), np.zeros((1, 1)), np.ones((2, 1)))

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            solve_sylvester(np.eye(3), np.eye(2), np.ones((2, 2)))


class TestABlock:
    """Test cases for the A update."""

    def test_solution_is_stationary(self, blobs, ctx):
        """Test that the A objective has zero gradient at A_bar for orthonormal U."""
        rng = np.random.default_rng(6)
        U = project_nonneg_orthogonal(rng.uniform(size=(blobs.d, 3)))
        Z = rng.uniform(size=(3, 3))
        W = blobs.values
        lam, mu, beta = 2.0, 1.5, 0.8

        A_bar = solve_a_bar(W, U, Z, ctx, lam, mu, beta).unprojected

        grad = (
            2 * lam * ctx.L @ A_bar
            + 2 * mu * ctx.S @ (A_bar - ctx.Y)
            - beta * (W - U @ Z.T @ A_bar.T).T @ U @ Z.T
        )
        _, _, R = a_system(W, U, Z, ctx, lam, mu, beta)
        assert np.linalg.norm(grad) <= 1e-8 * np.linalg.norm(R)

    @pytest.mark.parametrize("seed", range(20))
    def test_system_is_the_gradient_of_the_a_objective(self, seed):
        """Test P A + A Q - R against central differences of the A objective."""
        rng = np.random.default_rng(seed)
        c, r = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        data = generate_synthetic(c, 4, int(rng.integers(max(r, c) + 1, 12)), separation=3.0, seed=seed)
        ctx = build_context(data, Hyperparams(knn=3, seed=seed))
        U = project_nonneg_orthogonal(rng.uniform(size=(data.d, r)))
        Z, A = rng.uniform(size=(c, r)), rng.uniform(size=(data.n, c))
        W = data.values
        lam, mu, beta = rng.uniform(0.1, 5.0, size=3)
        h = 1e-6

        def objective(M):
            R = W - U @ Z.T @ M.T
            return lam * smoothness_term(M, ctx) + mu * label_term(M, ctx) + 0.5 * beta * float(np.sum(R * R))

        P, Q, R = a_system(W, U, Z, ctx, lam, mu, beta)
        operator = P @ A + A @ Q - R

        numeric = np.zeros_like(A)
        for index in np.ndindex(*A.shape):
            step = np.zeros_like(A)
            step[index] = h
            numeric[index] = (objective(A + step) - objective(A - step)) / (2 * h)
        np.testing.assert_allclose(operator, numeric, rtol=1e-5, atol=1e-5 * np.abs(operator).max())

    def test_projection_is_non_negative(self, blobs, ctx):
        rng = np.random.default_rng(7)
        U = project_nonneg_orthogonal(rng.uniform(size=(blobs.d, 3)))

        update = solve_a_bar(blobs.values, U, rng.uniform(size=(3, 3)), ctx, 1000.0, 1.0, 1.0)

        np.testing.assert_array_equal(update.value, np.maximum(update.unprojected, 0.0))
        assert update.residual <= 1e-6

    def test_singular_system_is_regularized(self, blobs, ctx):
        """Test that Z = 0 with lambda = 0 falls back to the ridge and flags it."""
        d, n = blobs.values.shape

        update = solve_a_bar(np.zeros((d, n)), np.zeros((d, 3)), np.zeros((3, 3)), ctx, 0.0, 1.0, 1.0)

        assert update.flags == ('a_regularized',)
        assert np.all(np.isfinite(update.value))
        mask = ctx.labeled_mask
        np.testing.assert_allclose(update.value[mask], ctx.Y[mask], atol=1e-8)
        np.testing.assert_allclose(update.value[~mask], 0.0, atol=1e-4)

    def test_update_uses_the_working_matrix(self, blobs, ctx, hp):
        """Test that update_a solves against X - E - Lambda/beta."""
        rng = np.random.default_rng(8)
        state = init_state(blobs, ctx, hp)
        state = state.replace(E=rng.normal(scale=0.1, size=blobs.values.shape), Lambda=rng.normal(size=blobs.values.shape))
        X = blobs.values

        update = update_a(state, X, ctx, hp)

        expected = solve_a_bar(working_matrix(X, state, hp.beta), state.U, state.Z, ctx, hp.lam, hp.mu, hp.beta)
        np.testing.assert_array_equal(update.value, expected.value)
        assert np.all(update.value >= 0)


class TestZBlock:
    """Test cases for the Z update."""

    def test_normal_equations(self):
        rng = np.random.default_rng(9)
        W, U, A = rng.uniform(size=(6, 10)), rng.uniform(size=(6, 2)), rng.uniform(size=(10, 3))

        update = solve_z_bar(W, U, A)

        assert update.flags == ()
        assert update.residual <= 1e-10
        np.testing.assert_allclose(A.T @ A @ update.unprojected, A.T @ W.T @ U, atol=1e-10)

    def test_rank_deficient_uses_least_squares(self):
        rng = np.random.default_rng(10)
        W, U, A = rng.uniform(size=(6, 10)), rng.uniform(size=(6, 2)), rng.uniform(size=(10, 3))
        A[:, 2] = 0.0

        update = solve_z_bar(W, U, A)

        assert update.flags == ('z_pseudoinverse',)
        assert np.all(update.value >= 0)
        np.testing.assert_allclose(update.unprojected[2], 0.0, atol=1e-10)

    def test_recovers_z_from_an_exact_factorization(self, block_basis, hp):
        """Test that Z is a fixed point when X = U Z^T A^T and U has orthonormal columns."""
        state, X = exact_state(block_basis, np.random.default_rng(11))

        update = update_z(state, X, hp)

        np.testing.assert_allclose(update.value, state.Z, atol=1e-10)


class TestEAndLambdaBlocks:
    """Test cases for the residual and multiplier updates."""

    def test_small_rows_vanish(self, block_basis):
        state, X = exact_state(block_basis, np.random.default_rng(2))
        state = state.replace(Lambda=np.full_like(X, 0.5))

        E = update_e(state, X, 1.0, PenaltySpec.mcp(sigma=1e6))

        assert not np.any(E)

    def test_multiplier_step(self, block_basis):
        rng = np.random.default_rng(3)
        state, X = exact_state(block_basis, rng)
        state = state.replace(E=rng.normal(size=X.shape), Lambda=rng.normal(size=X.shape))

        Lambda = update_lambda(state, X, 2.0)

        np.testing.assert_allclose(Lambda, state.Lambda - 2.0 * (X - compose(state.U, state.Z, state.A) - state.E))

    def test_lagrangian_on_a_feasible_point(self, blobs, ctx, hp):
        """Test that the multiplier terms vanish when the constraint holds."""
        state = init_state(blobs, ctx, hp)
        state = state.replace(Lambda=np.random.default_rng(0).normal(size=blobs.values.shape))
        spec = PenaltySpec.mcp(sigma=1.0)

        value = augmented_lagrangian(state, blobs.values, ctx, hp, spec)

        expected = (
            residual_loss(state.E, spec, hp.beta)
            + hp.lam * smoothness_term(state.A, ctx)
            + hp.mu * label_term(state.A, ctx)
        )
        assert value == pytest.approx(expected, rel=1e-9)


    @pytest.mark.parametrize("spec", [PenaltySpec.mcp(sigma=0.8), PenaltySpec.scad(sigma=0.8)])
    def test_e_step_is_locally_optimal(self, spec):
        """Test that no small perturbation of a row lowers the E-step objective."""
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(30, 6))
        state = SolverState(
            U=rng.uniform(size=(30, 2)), A=rng.uniform(size=(6, 2)), Z=rng.uniform(size=(2, 2)),
            E=np.zeros_like(X), Lambda=rng.normal(size=X.shape)
        )
        beta = 1.5
        V = e_target(state, X, beta)
        V *= rng.uniform(0.05, 3.0, size=(30, 1)) / np.linalg.norm(V, axis=1, keepdims=True)
        state = state.replace(Lambda=beta * (X - compose(state.U, state.Z, state.A) - V))

        E = update_e(state, X, beta, spec)

        best = e_row_objective(E, V, spec, beta)
        for _ in range(200):
            moved = E + rng.normal(scale=1e-3, size=E.shape)
            assert np.all(best <= e_row_objective(moved, V, spec, beta) + 1e-12)

    def test_lagrangian_term_by_term(self, blobs, ctx):
        rng = np.random.default_rng(13)
        X = blobs.values
        state = SolverState(
            U=rng.uniform(size=(blobs.d, 3)), A=rng.uniform(size=(blobs.n, 3)), Z=rng.uniform(size=(3, 3)),
            E=rng.normal(size=X.shape), Lambda=rng.normal(size=X.shape)
        )
        hp = Hyperparams(lam=2.5, mu=0.7, beta=1.0, knn=5, seed=3)
        spec = PenaltySpec.scad(sigma=0.6)

        value = augmented_lagrangian(state, X, ctx, hp, spec)

        expected = sum(phi_value(spec, float(np.linalg.norm(row))) for row in state.E)
        expected += hp.lam * float(np.trace(state.A.T @ ctx.L @ state.A))
        gap = state.A - ctx.Y
        expected += hp.mu * float(np.trace(gap.T @ ctx.S @ gap))
        R = X - state.U @ state.Z.T @ state.A.T - state.E
        expected += -float(np.sum(state.Lambda * R)) + 0.5 * hp.beta * float(np.linalg.norm(R) ** 2)
        assert value == pytest.approx(expected, rel=1e-10)


class TestObjectiveTerms:
    """Test cases for the graph and label terms."""

    def test_smoothness_is_non_negative(self, blobs, ctx):
        rng = np.random.default_rng(14)

        for _ in range(50):
            assert smoothness_term(rng.uniform(size=(blobs.n, 3)), ctx) >= -1e-10

    def test_label_term_sums_labeled_rows(self, blobs, ctx):
        A = np.random.default_rng(15).uniform(size=(blobs.n, 3))

        direct = sum(
            float(np.sum((A[i] - ctx.Y[i]) ** 2)) for i in range(blobs.n) if ctx.labeled_mask[i]
        )

        assert label_term(A, ctx) == pytest.approx(direct, rel=1e-12)


class TestSegmentStep:
    """Test cases for the exact line search on a segment."""

    def test_interior_minimum(self):
        m = np.array([1.0, -2.0])

        point, t = segment_step(lambda x: float(np.sum((x - m) ** 2)), np.zeros(2), 2.0 * m)

        assert t == pytest.approx(0.5)
        np.testing.assert_allclose(point, m)

    def test_full_step_when_candidate_is_best(self):
        point, t = segment_step(lambda x: float(np.sum((x - 3.0) ** 2)), np.zeros(1), np.full(1, 3.0))

        assert t == 1.0
        np.testing.assert_array_equal(point, [3.0])

    def test_stays_when_candidate_only_hurts(self):
        point, t = segment_step(lambda x: float(np.sum(x ** 2)), np.zeros(1), np.ones(1))

        assert t == 0.0
        np.testing.assert_array_equal(point, [0.0])


class TestInitialization:
    """Test cases for the initial iterate."""

    def test_random_start(self, blobs, ctx, hp):
        state = init_state(blobs, ctx, hp, 'random')

        assert orthogonality(state.U) <= 1e-12
        assert np.all(state.A >= 0)
        np.testing.assert_array_equal(state.A[ctx.labeled_mask], ctx.Y[ctx.labeled_mask])
        assert feasibility(state, blobs.values) <= 1e-12
        assert not np.any(state.Lambda)

    def test_kmeans_start_recovers_separated_blobs(self):
        data = generate_synthetic(3, 20, 9, separation=20.0, seed=1, spread=0.1)
        hp = Hyperparams(knn=5, seed=1)
        ctx = build_context(data, hp)

        state = init_state(data, ctx, hp, 'kmeans')

        np.testing.assert_array_equal(np.argmax(state.A, axis=1), data.labels)
        assert orthogonality(state.U) <= 1e-12

    def test_unknown_strategy(self, blobs, ctx, hp):
        with pytest.raises(ContractViolation):
            init_state(blobs, ctx, hp, 'spectral')


class TestPredictLabels:
    """Test cases for reading labels off A."""

    def test_argmax_with_zero_rows_flagged(self):
        A = np.array([[0.0, 0.0], [0.2, 0.5], [0.3, 0.3]])
        state = SolverState(U=np.eye(2), A=A, Z=np.eye(2), E=np.zeros((2, 3)), Lambda=np.zeros((2, 3)))

        labels = predict_labels(state)

        np.testing.assert_array_equal(labels, [0, 1, 0])
        assert state.flags == ['zero_rows:1']


class TestIterate:
    """Test cases for single ADMM iterations."""

    @pytest.mark.parametrize("spec", ALL_KINDS)
    def test_primal_blocks_never_raise_the_lagrangian(self, hp, spec):
        data = generate_synthetic(3, 40, 30, separation=3.0, seed=2)
        ctx = build_context(data, hp)
        cfg = USubsolverConfig.from_hyperparams(hp, data)
        state = init_state(data, ctx, hp)

        for _ in range(50):
            state = iterate(state, data, ctx, hp, spec, cfg)

        assert state.iter == 50
        for record in state.trace:
            slack = 1e-8 * max(1.0, abs(record.lagrangian))
            for block in ('U', 'A', 'Z', 'E'):
                assert record.block_deltas[block] <= slack
            assert 0.0 <= record.a_step <= 1.0
            assert 0.0 <= record.z_step <= 1.0

    def test_accepted_bases_stay_orthogonal(self, blobs, ctx, hp):
        cfg = USubsolverConfig.from_hyperparams(hp, blobs)
        state = init_state(blobs, ctx, hp)

        for _ in range(20):
            state = iterate(state, blobs, ctx, hp, PenaltySpec.etp(), cfg)

        for record in state.trace:
            if record.u_accepted:
                assert record.u_constraint_gap <= hp.eps2
            assert record.orthogonality <= 0.1
        assert np.all(state.U >= 0) and np.all(state.A >= 0) and np.all(state.Z >= 0)

    def test_without_safeguard_full_steps_are_taken(self, blobs, ctx):
        hp = Hyperparams(knn=5, seed=3, monotone=False)
        cfg = USubsolverConfig.from_hyperparams(hp, blobs)

        state = iterate(init_state(blobs, ctx, hp), blobs, ctx, hp, PenaltySpec.mcp(), cfg)

        assert state.trace[0].a_step == 1.0
        assert state.trace[0].z_step == 1.0

    def test_non_finite_iterate_aborts(self, blobs, ctx, hp):
        values = blobs.values.copy()
        values[0, 0] = np.nan
        broken = DataMatrix(values=values, labels=blobs.labels)

        with pytest.raises(NumericalAbort) as excinfo:
            fit(broken, ctx, hp, PenaltySpec.mcp(sigma=1.0), init_strategy='random')

        assert excinfo.value.block == 'A'
        assert excinfo.value.iteration == 0


class TestFit:
    """Test cases for full solver runs."""

    def test_mcp_reaches_feasibility(self, hp):
        data = generate_synthetic(3, 40, 30, separation=3.0, seed=2)

        result = fit(data, build_context(data, hp), hp, PenaltySpec.mcp())

        assert result.iterations > 1
        assert min(record.feasibility for record in result.trace) <= 1e-3
        assert result.trace[-1].orthogonality <= 0.1

    def test_runs_past_the_first_iterate(self, blobs, ctx, hp):
        """Test that a data-scaled penalty thresholds residual rows instead of copying them."""
        result = fit(blobs, ctx, hp, PenaltySpec.mcp())

        assert result.iterations > 1
        assert result.trace[0].feasibility > hp.outer_tol

    def test_feasible_first_iterate_is_not_converged(self, blobs, ctx):
        """Test that feasibility alone does not stop the loop while the factors still move."""
        hp = Hyperparams(knn=5, seed=3, max_outer_iters=1)

        result = fit(blobs, ctx, hp, PenaltySpec.mcp(sigma=1e-9), init_strategy='random')

        record = result.trace[0]
        assert record.feasibility <= hp.outer_tol
        assert record.factor_change > hp.outer_tol
        assert not result.converged

    def test_result_carries_the_resolved_scale(self, blobs, ctx, hp):
        result = fit(blobs, ctx, hp, PenaltySpec.etp())

        expected = PenaltySpec.etp().resolve_sigma(blobs, hp.resolve_rank(blobs))
        assert result.penalty.sigma == pytest.approx(expected)
        assert result.penalty.sigma > 0

    def test_given_scale_is_kept(self, blobs, ctx, hp):
        result = fit(blobs, ctx, hp, PenaltySpec.mcp(sigma=2.5))

        assert result.penalty.sigma == 2.5

    def test_zero_iterations_returns_the_start(self, blobs, ctx):
        hp = Hyperparams(knn=5, seed=3, max_outer_iters=0)

        result = fit(blobs, ctx, hp, PenaltySpec.etp())

        assert result.iterations == 0
        assert not result.converged
        assert result.trace == []
        np.testing.assert_array_equal(result.A, init_state(blobs, ctx, hp).A)

    def test_graph_must_match_data(self, ctx, hp):
        other = generate_synthetic(3, 10, 12, separation=3.0, seed=0)

        with pytest.raises(ContractViolation):
            fit(other, ctx, hp, PenaltySpec.etp())

    def test_deterministic(self, blobs, ctx, hp):
        first = fit(blobs, ctx, hp, PenaltySpec.scad())
        second = fit(blobs, ctx, hp, PenaltySpec.scad())

        np.testing.assert_array_equal(first.labels, second.labels)
        np.testing.assert_array_equal(first.A, second.A)
        assert [r.lagrangian for r in first.trace] == [r.lagrangian for r in second.trace]

    @pytest.mark.parametrize("seed", range(5))
    def test_recovers_separated_classes(self, seed):
        data = generate_synthetic(3, 100, 50, separation=3.0, seed=seed)
        hp = Hyperparams(seed=seed)
        ctx = build_context(data, hp)

        result = fit(data, ctx, hp, PenaltySpec.etp())

        assert evaluate(result.labels, data.labels).acc >= 0.95

    def test_holds_up_better_than_nmf_under_salt_and_pepper(self):
        ronmf_acc, nmf_acc = [], []
        for seed in range(5):
            data = generate_synthetic(3, 100, 50, separation=3.0, seed=seed)
            noisy = salt_pepper_corrupt(data, 0.3, seed=seed)
            hp = Hyperparams(lam=1000.0, mu=1.0, labeled_fraction=0.3, seed=seed)

            result = fit(noisy, build_context(noisy, hp), hp, PenaltySpec.etp())
            baseline = nmf_multiplicative(noisy.values, 3, seed=seed)

            ronmf_acc.append(evaluate(result.labels, data.labels).acc)
            nmf_acc.append(evaluate(baseline.labels, data.labels).acc)

        assert np.mean(ronmf_acc) >= np.mean(nmf_acc)
