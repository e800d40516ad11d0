import numpy as np
import pytest
import scipy.sparse as sp
from conftest import random_stable_system

from icmor import simulate, solvers
from icmor.core import LtiSystem
from icmor.errors import SolverError


def diffusion_1d(n):
    h = 1.0 / (n + 1)
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    return (sp.diags([off, main, off], [-1, 0, 1]) / h**2).tocsr()


class TestDenseLyapunov:
    def test_minus_identity(self):
        Q = solvers.solve_lyapunov_dense(-np.eye(2), np.eye(2), transposed=True)
        assert np.allclose(Q, 0.5 * np.eye(2))

    def test_scalar(self):
        q = solvers.solve_lyapunov_dense(np.array([[-3.0]]), np.array([[4.0]]),
                                         transposed=True)
        assert np.allclose(q, 2.0 / 3.0)

    def test_residual_contract(self):
        rng = np.random.default_rng(0)
        sys = random_stable_system(rng, 8, p=2)
        rhs = sys.C.T @ sys.C
        Q = solvers.solve_lyapunov_dense(sys.A, rhs, transposed=True)
        assert solvers.lyapunov_residual(sys.A, Q, rhs, transposed=True) <= 1e-10

    def test_result_symmetric_and_psd(self):
        rng = np.random.default_rng(1)
        for seed in range(5):
            sys = random_stable_system(np.random.default_rng(seed), 12, p=2)
            Q = solvers.solve_lyapunov_dense(sys.A, sys.C.T @ sys.C, transposed=True)
            assert np.allclose(Q, Q.T)
            w = np.linalg.eigvalsh(Q)
            assert w.min() >= -1e-10 * np.abs(w).max()

    def test_singular_operator_rejected(self):
        # purely imaginary pair: lambda_i + conj(lambda_j) = 0
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(SolverError, match="singular Lyapunov operator"):
            solvers.solve_lyapunov_dense(A, np.eye(2), transposed=True)
        with pytest.raises(SolverError, match="singular Lyapunov operator"):
            solvers.solve_lyapunov_dense(np.diag([1.0, -1.0]), np.eye(2))

    def test_asymmetric_rhs_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            solvers.solve_lyapunov_dense(-np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestEnergyIdentity:
    @pytest.mark.parametrize("seed", range(5))
    def test_output_energy_matches_quadratic_form(self, seed):
        rng = np.random.default_rng(40 + seed)
        sys = random_stable_system(rng, int(rng.integers(5, 31)), p=2, q=0)
        Q = solvers.solve_lyapunov_dense(sys.A, sys.C.T @ sys.C, transposed=True)
        energy = float(sys.x0 @ Q @ sys.x0)
        sim = simulate.output_error_l2(sys, rtol=1e-11, atol=1e-13)
        assert sim.settled
        assert abs(sim.value**2 - energy) <= 1e-6 * energy


class TestLowRank:
    def test_diffusion_budget_and_residual(self):
        A = diffusion_1d(400)
        C = np.zeros((1, 400))
        C[0, 133] = 1.0
        gf = solvers.solve_lyapunov_lowrank(A, C, tol=1e-10)
        assert gf.converged
        assert gf.residual <= 1e-10
        assert gf.rank < 400 // 4

    def test_zero_output_matrix(self):
        gf = solvers.solve_lyapunov_lowrank(diffusion_1d(50), np.zeros((1, 50)))
        assert gf.rank == 0
        assert gf.residual == 0.0

    def test_agreement_with_dense(self):
        A = diffusion_1d(120)
        rng = np.random.default_rng(3)
        C = rng.standard_normal((2, 120))
        gf = solvers.solve_lyapunov_lowrank(A, C, tol=1e-11)
        Qd = solvers.solve_lyapunov_dense(A.toarray(), C.T @ C, transposed=True)
        gap = np.linalg.norm(gf.factor.T @ gf.factor - Qd, 2)
        assert gap <= max(1e-11 * np.linalg.norm(Qd, 2) * 10, 1e-9)

    def test_stagnation_flagged(self):
        A = diffusion_1d(200)
        rng = np.random.default_rng(4)
        C = rng.standard_normal((3, 200))
        gf = solvers.solve_lyapunov_lowrank(A, C, tol=1e-14, max_rank=9)
        assert not gf.converged
        assert gf.rank <= 9

    def test_controllability_side(self):
        rng = np.random.default_rng(5)
        sys = random_stable_system(rng, 60, q=2)
        gf = solvers.gramian(sys, "controllability", method="lowrank", tol=1e-11)
        Pd = solvers.solve_lyapunov_dense(sys.A, sys.B @ sys.B.T)
        assert np.linalg.norm(gf.factor.T @ gf.factor - Pd, 2) <= 1e-8 * np.linalg.norm(Pd, 2)


class TestSylvester:
    def test_scalars(self):
        X = solvers.solve_sylvester_sparse_dense(
            np.array([[-1.0]]), np.array([[-2.0]]), np.array([[12.0]]))
        assert np.allclose(X, -4.0)

    def test_sign_flip_identity(self):
        rng = np.random.default_rng(6)
        sys = random_stable_system(rng, 12, p=2)
        rhs = sys.C.T @ sys.C
        Q = solvers.solve_lyapunov_dense(sys.A, rhs, transposed=True)
        X = solvers.solve_sylvester_sparse_dense(sys.A, sys.A, rhs)
        assert np.linalg.norm(X + Q) <= 1e-9 * np.linalg.norm(Q)

    def test_residual_random(self):
        rng = np.random.default_rng(7)
        big = random_stable_system(rng, 50, p=2)
        small = random_stable_system(rng, 5, p=2)
        rhs = rng.standard_normal((50, 5))
        X = solvers.solve_sylvester_sparse_dense(big.A, small.A, rhs)
        res = np.linalg.norm(big.A.T @ X + X @ small.A - rhs)
        assert res <= 1e-10 * np.linalg.norm(rhs)

    def test_sparse_coefficient(self):
        rng = np.random.default_rng(8)
        A = diffusion_1d(150)
        small = random_stable_system(rng, 4, p=1)
        rhs = rng.standard_normal((150, 4))
        X = solvers.solve_sylvester_sparse_dense(A, small.A, rhs)
        res = np.linalg.norm(A.T @ X + X @ small.A - rhs)
        assert res <= 1e-10 * np.linalg.norm(rhs)

    def test_unstable_small_matrix_rejected(self):
        from icmor.errors import StabilityError

        with pytest.raises(StabilityError):
            solvers.solve_sylvester_sparse_dense(
                np.array([[-1.0]]), np.array([[2.0]]), np.array([[1.0]]))


class TestResidualFunction:
    def test_zero_solution_unit_rhs(self):
        assert solvers.lyapunov_residual(np.array([[-1.0]]), np.zeros((1, 1)),
                                         np.eye(1)) == 1.0

    def test_factored_matches_dense_evaluation(self):
        rng = np.random.default_rng(9)
        sys = random_stable_system(rng, 25, p=2)
        gf = solvers.gramian(sys, "observability")
        direct = solvers.lyapunov_residual(sys.A, gf.factor.T @ gf.factor,
                                           sys.C.T @ sys.C, transposed=True)
        factored = solvers.lyapunov_residual(sys.A, gf.factor, sys.C, transposed=True)
        assert abs(direct - factored) <= 1e-12 + 1e-6 * direct

    def test_lowrank_result_meets_tolerance(self):
        A = diffusion_1d(200)
        C = np.zeros((1, 200))
        C[0, 50] = 2.0
        gf = solvers.solve_lyapunov_lowrank(A, C, tol=1e-8)
        assert solvers.lyapunov_residual(A, gf, C, transposed=True) <= 1e-8


class TestPsdFactor:
    def test_exact_square_root(self):
        rng = np.random.default_rng(10)
        M = rng.standard_normal((6, 4))
        Q = M @ M.T
        U = solvers.psd_factor(Q)
        assert U.shape == (4, 6)
        assert np.linalg.norm(U.T @ U - Q) <= 1e-12 * np.linalg.norm(Q)

    def test_zero_matrix(self):
        assert solvers.psd_factor(np.zeros((3, 3))).shape == (0, 3)
