import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import oracles
from helpers import spatial_chain, two_link_planar
from motionimit import rbd
from motionimit.env.plant import toy_plant
from motionimit.rotations import quat_from_axis_angle


def pendulum_energy(chain, q, qd):
    return 0.5 * qd @ rbd.mass_matrix(chain, q) @ qd + rbd.potential_energy(chain, q)


class TestMassMatrix:
    def test_point_pendulum(self):
        np.testing.assert_allclose(rbd.mass_matrix(rbd.point_mass_pendulum(), [0.0]), [[1.0]], atol=1e-15)

    def test_symmetric_exactly(self):
        chain = spatial_chain()
        rng = np.random.default_rng(0)
        for _ in range(50):
            M = rbd.mass_matrix(chain, rng.uniform(-np.pi, np.pi, 3))
            assert np.abs(M - M.T).max() < 1e-12

    @pytest.mark.parametrize("make", [two_link_planar, spatial_chain])
    def test_matches_jacobian_oracle(self, make):
        chain = make()
        rng = np.random.default_rng(1)
        for _ in range(20):
            q = rng.uniform(-2, 2, chain.nq)
            np.testing.assert_allclose(rbd.mass_matrix(chain, q), oracles.mass_matrix(chain, q), atol=1e-12)

    def test_positive_definite_1000_configs(self):
        chain = spatial_chain()
        rng = np.random.default_rng(2)
        smallest = min(np.linalg.eigvalsh(rbd.mass_matrix(chain, rng.uniform(-np.pi, np.pi, 3))).min()
                       for _ in range(1000))
        assert smallest > 0

    def test_floating_base_pd(self):
        chain = toy_plant().chain
        rng = np.random.default_rng(3)
        q = np.concatenate((rng.normal(size=3), quat_from_axis_angle((1, 2, 3), 0.7), rng.normal(size=4)))
        M = rbd.mass_matrix(chain, q)
        assert np.abs(M - M.T).max() < 1e-12
        assert np.linalg.eigvalsh(M).min() > 0
        # the base block holds the total mass
        np.testing.assert_allclose(np.diag(M)[3:6], chain.total_mass, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rbd.mass_matrix(two_link_planar(), np.zeros(3))


class TestBiasForces:
    def test_zero_velocity_zero_gravity(self):
        chain = spatial_chain(gravity=(0, 0, 0))
        assert np.abs(rbd.bias_forces(chain, [0.3, -0.2, 1.0], np.zeros(3))).max() == 0.0

    def test_pendulum_horizontal(self):
        h = rbd.bias_forces(rbd.point_mass_pendulum(), [np.pi / 2], [0.0])
        assert abs(h[0]) == pytest.approx(9.81, abs=1e-12)

    @pytest.mark.parametrize("make", [two_link_planar, spatial_chain])
    def test_matches_lagrangian_oracle(self, make):
        chain = make()
        rng = np.random.default_rng(4)
        for _ in range(10):
            q, qd = rng.uniform(-2, 2, chain.nq), rng.uniform(-3, 3, chain.nv)
            np.testing.assert_allclose(rbd.bias_forces(chain, q, qd), oracles.bias_forces(chain, q, qd),
                                       atol=1e-6)


class TestForwardDynamics:
    def test_bias_torque_gives_rest(self):
        chain = spatial_chain()
        q, qd = np.array([0.2, 0.4, -0.5]), np.array([1.0, -0.3, 0.2])
        qdd = rbd.forward_dynamics(chain, q, qd, rbd.bias_forces(chain, q, qd))
        assert np.abs(qdd).max() < 1e-10

    def test_pendulum_unit_torque(self):
        chain = rbd.point_mass_pendulum()
        q = [0.3]
        g = -rbd.bias_forces(chain, q, [0.0])[0]
        assert rbd.forward_dynamics(chain, q, [0.0], [1.0])[0] == pytest.approx(g + 1.0, abs=1e-12)

    def test_residual_with_external_wrench(self):
        chain = spatial_chain()
        rng = np.random.default_rng(5)
        for _ in range(20):
            q, qd, tau = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
            w = rng.normal(size=(chain.n_bodies, 6))
            qdd = rbd.forward_dynamics(chain, q, qd, tau, w)
            # J^T w from point Jacobians: the force at each body origin plus the moment
            jtw = np.zeros(3)
            for b in range(chain.n_bodies):
                Jv, Jw = oracles.geometric_jacobians(chain, q, b, (0, 0, 0))
                jtw += Jw.T @ w[b, :3] + Jv.T @ w[b, 3:]
            res = rbd.mass_matrix(chain, q) @ qdd + rbd.bias_forces(chain, q, qd) - tau - jtw
            assert np.abs(res).max() < 1e-8

    def test_floating_free_fall(self):
        plant = toy_plant(gravity=(0, 0, -9.81))
        s = rbd.RobotState(np.zeros(4), np.zeros(4), base_pos=(0, 0, 1))
        acc = rbd.state_acceleration(plant.chain, s, np.zeros(4))
        np.testing.assert_allclose(acc[3:6], (0, 0, -9.81), atol=1e-10)
        np.testing.assert_allclose(acc[6:], 0, atol=1e-10)


class TestIntegrate:
    def test_constant_velocity(self):
        s = rbd.RobotState([0.0], [1.0])
        assert rbd.integrate(s, [0.0], 0.004).q[0] == pytest.approx(0.004, abs=1e-15)

    def test_zero_state_fixed_point(self):
        s = rbd.RobotState(np.zeros(3), np.zeros(3))
        s2 = rbd.integrate(s, np.zeros(9), 0.004)
        for a, b in ((s.q, s2.q), (s.base_quat, s2.base_quat), (s.base_pos, s2.base_pos)):
            np.testing.assert_array_equal(a, b)

    def test_velocity_first(self):
        s = rbd.RobotState([0.0], [0.0])
        s2 = rbd.integrate(s, [2.0], 0.1)
        assert s2.qd[0] == pytest.approx(0.2) and s2.q[0] == pytest.approx(0.02)

    def test_quaternion_norm_preserved(self):
        rng = np.random.default_rng(6)
        s = rbd.RobotState(np.zeros(2), np.zeros(2), base_angvel=rng.normal(size=3) * 5)
        for _ in range(2000):
            s = rbd.integrate(s, np.concatenate((rng.normal(size=3), np.zeros(5))), 0.004)
            assert abs(np.linalg.norm(s.base_quat) - 1.0) < 1e-9

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            rbd.integrate(rbd.RobotState([0.0], [0.0]), [0.0], 0.0)

    def test_pendulum_energy_drift_envelope(self):
        """Energy drift over 10 s at dt = 0.004 stays inside the measured envelope.

        Measured: 2.68e-2 J at dt = 0.004 and 2.66e-3 J at dt = 4e-4 (first
        order, bounded). The final angle is compared with a tight ODE solution.
        """
        chain = rbd.point_mass_pendulum()
        g = 9.81

        def run(dt, T=10.0):
            s = rbd.RobotState([1.0], [0.0])
            e0 = pendulum_energy(chain, s.q, s.qd)
            worst = 0.0
            for _ in range(int(round(T / dt))):
                s = rbd.integrate(s, rbd.forward_dynamics(chain, s.q, s.qd, [0.0]), dt)
                worst = max(worst, abs(pendulum_energy(chain, s.q, s.qd) - e0))
            return worst, s

        coarse, s_coarse = run(0.004)
        fine, _ = run(4e-4)
        assert coarse < 0.035
        assert 0.05 < fine / coarse < 0.15
        sol = solve_ivp(lambda t, y: (y[1], -g * np.sin(y[0])), (0, 10.0), (1.0, 0.0),
                        rtol=1e-12, atol=1e-12, method="DOP853")
        assert abs(s_coarse.q[0] - sol.y[0, -1]) < 0.02


class TestPassivity:
    def test_energy_balance(self):
        """dE/dt = qd^T tau for an unconstrained chain (checked with a fine step)."""
        chain = spatial_chain()
        s = rbd.RobotState([0.1, 0.2, -0.3], [0.5, -0.4, 0.3])
        dt = 1e-5
        work = 0.0
        e0 = rbd.kinetic_energy(chain, s.q, s.qd) + rbd.potential_energy(chain, s.q)
        for k in range(2000):
            tau = np.array([np.sin(k * dt * 20), 0.3, -0.2])
            qd_mid = s.qd.copy()
            s = rbd.integrate(s, rbd.forward_dynamics(chain, s.q, s.qd, tau), dt)
            work += dt * tau @ (0.5 * (qd_mid + s.qd))
        e1 = rbd.kinetic_energy(chain, s.q, s.qd) + rbd.potential_energy(chain, s.q)
        assert abs((e1 - e0) - work) < 2e-4 * max(1.0, abs(work))


class TestChainModel:
    def test_json_round_trip(self, tmp_path):
        chain = spatial_chain()
        rbd.save_chain(chain, tmp_path / "c.json")
        back = rbd.load_chain(tmp_path / "c.json")
        q = np.array([0.3, -0.1, 0.8])
        np.testing.assert_array_equal(rbd.mass_matrix(chain, q), rbd.mass_matrix(back, q))
        doc = json.loads((tmp_path / "c.json").read_text())
        assert set(doc) == {"links", "joints", "gravity"}

    def test_unknown_key_rejected(self):
        doc = spatial_chain().to_dict()
        doc["colour"] = "red"
        with pytest.raises(ValueError):
            rbd.ChainModel.from_dict(doc)

    def test_invariants(self):
        with pytest.raises(ValueError):
            rbd.ChainModel(links=(rbd.Link(1.0),), joints=(rbd.Joint(axis=(0, 0, 2)),))
        with pytest.raises(ValueError):
            rbd.ChainModel(links=(rbd.Link(1.0), rbd.Link(1.0)),
                           joints=(rbd.Joint(), rbd.Joint(parent=1)))
        with pytest.raises(ValueError):
            rbd.ChainModel(links=(rbd.Link(1.0, inertia=((1, 0.5, 0), (0, 1, 0), (0, 0, 1))),),
                           joints=(rbd.Joint(),))

    def test_fk_matches_homogeneous_oracle(self):
        chain = spatial_chain()
        q = np.array([0.4, -0.9, 1.3])
        Rw, pw = rbd.body_poses(chain, q)
        for i, T in enumerate(oracles.fk(chain, q)):
            np.testing.assert_allclose(Rw[i], T[:3, :3], atol=1e-13)
            np.testing.assert_allclose(pw[i], T[:3, 3], atol=1e-13)
