import numpy as np
import pytest
from conftest import random_stable_system

from icmor import simulate
from icmor.core import LtiSystem
from icmor.simulate import PulseInput, TimeMesh, Trajectory, log_mesh


class TestLogMesh:
    def test_unit_horizon(self):
        mesh = log_mesh(1.0)
        assert len(mesh) == 10001
        assert mesh.points[0] == 0.0
        assert mesh.points[1] == 1e-20
        assert mesh.points[-1] == 1.0

    def test_long_horizon(self):
        mesh = log_mesh(1000.0)
        assert np.isclose(mesh.points[1], 1e-17)
        assert mesh.points[-1] == 1000.0

    @pytest.mark.parametrize("T", [0.3, 7.0, 1e4])
    def test_structure(self, T):
        mesh = log_mesh(T)
        assert len(mesh) == 10001
        assert np.all(np.diff(mesh.points) > 0)
        assert mesh.T == T

    def test_invalid_horizon(self):
        with pytest.raises(ValueError):
            log_mesh(0.0)

    def test_mesh_validation(self):
        with pytest.raises(ValueError, match="start at 0"):
            TimeMesh(np.array([1.0, 2.0]))
        with pytest.raises(ValueError, match="increasing"):
            TimeMesh(np.array([0.0, 2.0, 2.0]))


class TestIntegrate:
    def test_scalar_decay(self):
        sys = LtiSystem([[-1.0]], None, [[1.0]], [1.0])
        mesh = log_mesh(20.0)
        traj = simulate.integrate_lti(sys, None, mesh, rtol=1e-10, atol=1e-13)
        assert np.max(np.abs(traj.y[0] - np.exp(-mesh.points))) <= 1e-9

    def test_diagonal_modes(self):
        sys = LtiSystem(np.diag([-1.0, -2.0]), None, np.eye(2), [1.0, 1.0])
        mesh = log_mesh(10.0)
        traj = simulate.integrate_lti(sys, None, mesh, rtol=1e-10, atol=1e-13)
        assert np.max(np.abs(traj.y[0] - np.exp(-mesh.points))) <= 1e-9
        assert np.max(np.abs(traj.y[1] - np.exp(-2 * mesh.points))) <= 1e-9

    def test_pulse_switching_times_hit_exactly(self):
        sys = LtiSystem([[-1.0]], [[1.0]], [[1.0]], [0.0])
        pulse = PulseInput(1.0, 2.0, 1.0)
        mesh = TimeMesh(np.linspace(0.0, 5.0, 1001))
        traj = simulate.integrate_lti(sys, pulse, mesh, rtol=1e-11, atol=1e-13)
        t = mesh.points
        closed = np.where(t < 1, 0.0,
                          np.where(t < 2, 1 - np.exp(-(t - 1)),
                                   (1 - np.exp(-1.0)) * np.exp(-(t - 2))))
        assert np.max(np.abs(traj.y[0] - closed)) <= 1e-9

    def test_zero_order_system(self):
        from icmor.core import ReducedModel

        rom = ReducedModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((2, 0)))
        mesh = log_mesh(1.0, num=100)
        traj = simulate.integrate_lti(rom, None, mesh)
        assert traj.y.shape == (2, 101)
        assert not np.any(traj.y)

    def test_expm_cross_validation(self):
        rng = np.random.default_rng(50)
        sys = random_stable_system(rng, 30, p=2, q=0)
        mesh = TimeMesh(np.concatenate([[0.0], np.geomspace(1e-6, 25.0, 2000)]))
        ya = simulate.integrate_lti(sys, None, mesh, rtol=1e-10, atol=1e-13)
        ye = simulate.integrate_lti(sys, None, mesh, method="expm")
        assert np.linalg.norm(ya.y - ye.y) <= 1e-8 * np.linalg.norm(ye.y)

    def test_expm_with_pulse_matches_adaptive(self):
        rng = np.random.default_rng(51)
        sys = random_stable_system(rng, 12, p=1, q=1)
        pulse = PulseInput(0.5, 1.5, 2.0)
        mesh = TimeMesh(np.linspace(0.0, 6.0, 400))
        ya = simulate.integrate_lti(sys, pulse, mesh, rtol=1e-11, atol=1e-13)
        ye = simulate.integrate_lti(sys, pulse, mesh, method="expm")
        assert np.linalg.norm(ya.y - ye.y) <= 1e-8 * np.linalg.norm(ye.y)

    def test_expm_rejects_general_input(self):
        sys = LtiSystem([[-1.0]], [[1.0]], [[1.0]], [0.0])
        with pytest.raises(ValueError, match="piecewise-constant"):
            simulate.integrate_lti(sys, lambda t: np.sin(t),
                                   log_mesh(1.0, num=10), method="expm")


class TestCumulativeError:
    def test_identical_trajectories(self):
        mesh = log_mesh(5.0, num=500)
        y = np.vstack([np.exp(-mesh.points)])
        E = simulate.cumulative_l2_error(Trajectory(mesh, y), Trajectory(mesh, y))
        assert not np.any(E)

    def test_scalar_difference_analytic(self):
        # difference e^{-t}: E(inf)^2 = 1/2
        mesh = log_mesh(50.0)
        d = Trajectory(mesh, np.exp(-mesh.points)[None, :])
        z = Trajectory(mesh, np.zeros((1, len(mesh))))
        E = simulate.cumulative_l2_error(d, z)
        assert abs(E[-1] - np.sqrt(0.5)) <= 1e-6 * np.sqrt(0.5)

    def test_fom_rom_scalar_pair(self):
        # outputs e^{-t} vs e^{-2t}: E(inf) = sqrt(1/12)
        mesh = log_mesh(60.0)
        a = Trajectory(mesh, np.exp(-mesh.points)[None, :])
        b = Trajectory(mesh, np.exp(-2.0 * mesh.points)[None, :])
        E = simulate.cumulative_l2_error(a, b)
        assert abs(E[-1] - np.sqrt(1.0 / 12.0)) <= 5e-6 * np.sqrt(1.0 / 12.0)

    def test_monotone_along_mesh(self):
        rng = np.random.default_rng(52)
        mesh = log_mesh(3.0, num=800)
        a = Trajectory(mesh, rng.standard_normal((2, len(mesh))))
        b = Trajectory(mesh, rng.standard_normal((2, len(mesh))))
        E = simulate.cumulative_l2_error(a, b)
        assert np.all(np.diff(E) >= 0)

    def test_mesh_mismatch_rejected(self):
        a = Trajectory(log_mesh(1.0, num=50), np.zeros((1, 51)))
        b = Trajectory(log_mesh(2.0, num=50), np.zeros((1, 51)))
        with pytest.raises(ValueError, match="mesh"):
            simulate.cumulative_l2_error(a, b)


class TestInfiniteHorizon:
    def test_scalar_pair_value(self):
        fom = LtiSystem([[-1.0]], None, [[1.0]], [1.0])
        rom = LtiSystem([[-2.0]], None, [[1.0]], [1.0])
        res = simulate.output_error_l2(fom, rom, rtol=1e-12, atol=1e-14)
        assert res.settled
        assert abs(res.value - np.sqrt(1.0 / 12.0)) <= 1e-10

    def test_zero_initial_state(self):
        sys = LtiSystem([[-1.0]], None, [[1.0]], [0.0])
        res = simulate.output_error_l2(sys)
        assert res.value == 0.0 and res.settled

    def test_truncation_flagged(self):
        # slow system, tiny horizon cap: must be reported as unsettled
        sys = LtiSystem([[-1e-3]], None, [[1.0]], [1.0])
        res = simulate.output_error_l2(sys, t_max=1.0)
        assert not res.settled
        assert res.t_final <= 1.0 + 1e-12

    def test_forced_error_and_input_norm(self):
        fom = LtiSystem([[-1.0]], [[1.0]], [[1.0]], [0.0])
        pulse = PulseInput(1.0, 2.0, 1.0)
        err = simulate.forced_error_l2(fom, fom, pulse, 5.0)
        assert err <= 1e-12
        assert abs(simulate.input_l2_norm(pulse, 5.0) - 1.0) <= 1e-9
