import numpy as np
import pytest
from conftest import random_stable_system

from icmor import estimator, reduction, simulate, solvers
from icmor.core import LtiSystem, ReducedModel
from icmor.errors import StabilityError


@pytest.fixture
def scalar_pair():
    """Hand-solvable pair: full system (a=-1, c=1, x0=1), surrogate
    (ar=-2, cr=1) with the identity initial-state map."""
    fom = LtiSystem([[-1.0]], None, [[1.0]], [1.0])
    rom = ReducedModel([[-2.0]], None, [[1.0]], [1.0],
                       W=np.array([[1.0]]), V=np.array([[1.0]]))
    return fom, rom


class TestOfflineBlocks:
    def test_scalar_hand_solution(self, scalar_pair):
        fom, rom = scalar_pair
        obs = solvers.gramian(fom, "observability")
        off = estimator.build_offline(fom, rom, obs)
        # -2Q = -1, -3Xc = 1, -4Xr = -1
        assert np.allclose(obs.gram, 0.5)
        assert np.allclose(off.cross, -1.0 / 3.0)
        assert np.allclose(off.reduced, 0.25)

    def test_identity_rom_gives_sign_flipped_blocks(self):
        rng = np.random.default_rng(30)
        sys = random_stable_system(rng, 12, p=2, q=0)
        obs = solvers.gramian(sys, "observability")
        eye = np.eye(12)
        rom = ReducedModel(sys.A, None, sys.C, sys.x0, W=eye, V=eye)
        off = estimator.build_offline(sys, rom, obs)
        assert np.linalg.norm(off.cross + obs.gram) <= 1e-9 * np.linalg.norm(obs.gram)
        assert np.linalg.norm(off.reduced - obs.gram) <= 1e-9 * np.linalg.norm(obs.gram)

    def test_block_residual_contracts(self):
        rng = np.random.default_rng(31)
        sys = random_stable_system(rng, 40, p=2, q=0)
        obs = solvers.gramian(sys, "observability")
        X0 = rng.standard_normal((40, 2))
        split, _ = reduction.split_reduction(sys, X0, 6, 0, "bt", obs=obs)
        off = estimator.build_offline(sys, split.uncontrolled, obs)
        assert off.cross_residual <= 1e-10

    def test_unstable_rom_refused(self, scalar_pair):
        fom, _ = scalar_pair
        bad = ReducedModel([[2.0]], None, [[1.0]], [1.0],
                           W=np.array([[1.0]]), V=np.array([[1.0]]))
        obs = solvers.gramian(fom, "observability")
        with pytest.raises(StabilityError, match="Hurwitz"):
            estimator.build_offline(fom, bad, obs)

    def test_missing_w_map_refused(self, scalar_pair):
        fom, _ = scalar_pair
        rom = ReducedModel([[-2.0]], None, [[1.0]], [1.0])
        obs = solvers.gramian(fom, "observability")
        with pytest.raises(ValueError, match="W"):
            estimator.build_offline(fom, rom, obs)


class TestEstimate:
    def test_scalar_analytic_value(self, scalar_pair):
        fom, rom = scalar_pair
        off = estimator.build_offline(fom, rom, solvers.gramian(fom, "observability"))
        est = estimator.estimate(off, [1.0])
        assert abs(est.raw_square - 1.0 / 12.0) <= 1e-14
        assert abs(est.delta - np.sqrt(1.0 / 12.0)) <= 1e-14

    def test_perfect_rom_clamps_to_zero(self):
        rng = np.random.default_rng(32)
        sys = random_stable_system(rng, 10, p=1, q=0)
        obs = solvers.gramian(sys, "observability")
        eye = np.eye(10)
        rom = ReducedModel(sys.A, None, sys.C, sys.x0, W=eye, V=eye)
        off = estimator.build_offline(sys, rom, obs)
        est = estimator.estimate(off, sys.x0)
        # the three O(||Q|| ||x0||^2) terms cancel; what remains is round-off,
        # so the value floor is sqrt(eps * ||Q||_2) * ||x0||
        floor = np.sqrt(np.finfo(float).eps * np.linalg.norm(obs.gram, 2)) \
            * np.linalg.norm(sys.x0)
        assert est.delta <= 10.0 * floor
        assert est.delta >= 0.0
        assert abs(est.raw_square) <= 100.0 * floor**2

    def test_upper_bound_with_exact_factor(self, scalar_pair):
        fom, rom = scalar_pair
        off = estimator.build_offline(fom, rom, solvers.gramian(fom, "observability"),
                                      gap="exact")
        est = estimator.estimate(off, [1.0])
        assert est.upper_bound >= est.delta
        assert est.upper_bound <= est.delta * (1 + 1e-10) + 1e-12

    def test_gap_estimate_labeled(self):
        import scipy.sparse as sp

        n = 150
        h = 1.0 / (n + 1)
        A = (sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2).tocsr()
        rng = np.random.default_rng(33)
        C = rng.standard_normal((1, n))
        sys = LtiSystem(A, None, C, rng.standard_normal(n), assume_stable=True)
        obs = solvers.gramian(sys, "observability", method="lowrank", tol=1e-9)
        split, _ = reduction.split_reduction(sys, rng.standard_normal((n, 2)), 4, 0,
                                             "bt", obs=obs)
        off = estimator.build_offline(sys, split.uncontrolled, obs, gap="estimate")
        assert off.gap_is_estimate
        est = estimator.estimate(off, sys.x0)
        assert est.upper_bound >= est.delta

    def test_dimension_mismatch(self, scalar_pair):
        fom, rom = scalar_pair
        off = estimator.build_offline(fom, rom, solvers.gramian(fom, "observability"))
        with pytest.raises(ValueError, match="length"):
            estimator.estimate(off, [1.0, 2.0])

    @pytest.mark.parametrize("seed", range(3))
    def test_exactness_against_simulation(self, seed):
        rng = np.random.default_rng(300 + seed)
        sys = random_stable_system(rng, 50, p=2, q=2)
        obs = solvers.gramian(sys, "observability")
        ctrl = solvers.gramian(sys, "controllability")
        rom, _ = reduction.balanced_truncation(sys, 5, (ctrl, obs))
        rom_uc = ReducedModel(rom.Ar, None, rom.Cr, rom.x0r, W=rom.W, V=rom.V)
        off = estimator.build_offline(sys, rom_uc, obs)
        delta = estimator.estimate(off, sys.x0).delta
        sim = simulate.output_error_l2(
            LtiSystem(sys.A, None, sys.C, sys.x0), rom_uc, rtol=1e-11, atol=1e-13)
        assert sim.settled
        assert abs(delta - sim.value) <= 1e-6 * sim.value


class TestExactQuadraticForm:
    def test_scalar(self, scalar_pair):
        fom, rom = scalar_pair
        off = estimator.build_offline(fom, rom, solvers.gramian(fom, "observability"))
        assert abs(estimator.exact_squared_error(off, [1.0]) - 1.0 / 12.0) <= 1e-14

    def test_identity_rom_is_zero(self):
        rng = np.random.default_rng(34)
        sys = random_stable_system(rng, 8, p=1, q=0)
        obs = solvers.gramian(sys, "observability")
        eye = np.eye(8)
        rom = ReducedModel(sys.A, None, sys.C, sys.x0, W=eye, V=eye)
        off = estimator.build_offline(sys, rom, obs)
        scale = float(sys.x0 @ obs.gram @ sys.x0)
        assert abs(estimator.exact_squared_error(off, sys.x0)) <= 1e-12 * scale

    def test_requires_dense_gramian(self, scalar_pair):
        fom, rom = scalar_pair
        obs = solvers.gramian(fom, "observability")
        off_lr = estimator.EstimatorOffline(
            factor=obs.factor, cross=np.array([[-1 / 3]]), reduced=np.array([[0.25]]),
            w=np.array([[1.0]]), gram=None)
        with pytest.raises(ValueError, match="dense Gramian"):
            estimator.exact_squared_error(off_lr, [1.0])

    def test_matches_simulated_square(self):
        rng = np.random.default_rng(35)
        sys = random_stable_system(rng, 50, p=2, q=0)
        obs = solvers.gramian(sys, "observability")
        X0 = rng.standard_normal((50, 3))
        split, _ = reduction.split_reduction(sys, X0, 5, 0, "bt", obs=obs)
        off = estimator.build_offline(sys, split.uncontrolled, obs)
        x0 = rng.standard_normal(50)
        val = estimator.exact_squared_error(off, x0)
        sim = simulate.output_error_l2(
            LtiSystem(sys.A, None, sys.C, x0),
            ReducedModel(split.uncontrolled.Ar, None, split.uncontrolled.Cr,
                         split.uncontrolled.W.T @ x0, W=split.uncontrolled.W,
                         V=split.uncontrolled.V),
            rtol=1e-11, atol=1e-13)
        assert abs(val - sim.value**2) <= 1e-6 * sim.value**2


class TestRestrictedGram:
    def test_scalar_case(self, scalar_pair):
        fom, rom = scalar_pair
        off = estimator.build_offline(fom, rom, solvers.gramian(fom, "observability"))
        rg = estimator.restricted_gram(off, np.array([[1.0]]))
        assert np.allclose(rg.matrix, 1.0 / 12.0)
        assert abs(rg.sup_root - np.sqrt(1.0 / 12.0)) <= 1e-14
        assert np.allclose(np.abs(rg.worst_direction), 1.0)

    def test_perfect_rom_zero_matrix(self):
        rng = np.random.default_rng(36)
        sys = random_stable_system(rng, 9, p=1, q=0)
        obs = solvers.gramian(sys, "observability")
        eye = np.eye(9)
        rom = ReducedModel(sys.A, None, sys.C, sys.x0, W=eye, V=eye)
        off = estimator.build_offline(sys, rom, obs)
        rg = estimator.restricted_gram(off, rng.standard_normal((9, 2)))
        assert np.linalg.norm(rg.matrix) <= 1e-10 * np.linalg.norm(obs.gram)

    def test_bound_and_sharpness(self):
        rng = np.random.default_rng(37)
        sys = random_stable_system(rng, 30, p=2, q=0)
        obs = solvers.gramian(sys, "observability")
        X0 = rng.standard_normal((30, 3))
        split, _ = reduction.split_reduction(sys, X0, 5, 0, "bt", obs=obs)
        off = estimator.build_offline(sys, split.uncontrolled, obs)
        basis = rng.standard_normal((30, 3))
        rg = estimator.restricted_gram(off, basis)
        worst = estimator.estimate(off, basis @ rg.worst_direction).delta
        assert abs(worst - rg.sup_root) <= 1e-10 * rg.sup_root
        for _ in range(20):
            v0 = rng.standard_normal(3)
            d = estimator.estimate(off, basis @ v0).delta
            assert d <= rg.sup_root * np.linalg.norm(v0) * (1 + 1e-10) + 1e-14
