from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from motionimit import curriculum as cur
from motionimit.curriculum import CurriculumParams, assistance_scale, assistive_wrench, nominal_wrench
from motionimit.rotations import IDENTITY, quat_from_axis_angle


def _wxyz(rot):
    x, y, z, w = rot.as_quat()
    return np.array([w, x, y, z])


def random_pair(rng):
    state = SimpleNamespace(base_pos=rng.normal(size=3), base_quat=_wxyz(Rotation.random(random_state=rng)),
                            base_linvel=rng.normal(size=3), base_angvel=rng.normal(size=3))
    ref = SimpleNamespace(base_pos=rng.normal(size=3), base_quat=_wxyz(Rotation.random(random_state=rng)),
                          base_linvel=rng.normal(size=3), base_angvel=rng.normal(size=3),
                          base_linacc=rng.normal(size=3), base_angacc=rng.normal(size=3))
    return state, ref


def oracle_wrench(state, ref, p):
    """World-frame Newton-Euler with the inertia rotated to world."""
    g = np.asarray(p.gravity)
    R = Rotation.from_quat(np.roll(state.base_quat, -1)).as_matrix()
    Iw = R @ np.asarray(p.inertia) @ R.T
    err = (Rotation.from_quat(np.roll(ref.base_quat, -1))
           * Rotation.from_quat(np.roll(state.base_quat, -1)).inv()).as_rotvec()
    F = p.mass * (ref.base_linacc + p.kp_v * (ref.base_pos - state.base_pos)
                  + p.kd_v * (ref.base_linvel - state.base_linvel) - g)
    w = state.base_angvel
    M = (Iw @ (ref.base_angacc + p.kp_w * err + p.kd_w * (ref.base_angvel - w)) + np.cross(w, Iw @ w)
         - np.cross(R @ np.asarray(p.r_com), p.mass * g))
    return F, M


class TestSchedule:
    def test_examples(self):
        p = CurriculumParams()
        assert assistance_scale(1.0, p) == 0.6  # capped
        assert assistance_scale(0.2, p) == 0.0  # S_hat = eta
        assert assistance_scale(0.0, p) == 0.0
        assert assistance_scale(0.5, p) == pytest.approx(1 - 0.5 / 0.8)
        assert assistance_scale(-np.inf, p) == 0.0

    def test_vectorized(self):
        p = CurriculumParams()
        f = np.array([[1.0, 0.5, -np.inf], [0.2, 0.1, 0.45]])
        np.testing.assert_allclose(assistance_scale(f, p), [[0.6, 0.375, 0.0], [0.0, 0.0, 0.3125]])

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 1.0), st.floats(0, 0.99))
    def test_monotone_and_bounded(self, f1, f2, eta, bmax):
        p = CurriculumParams(eta=eta, beta_max=bmax)
        b1, b2 = assistance_scale(f1, p), assistance_scale(f2, p)
        assert 0 <= b1 <= bmax
        if f1 <= f2:
            assert b1 <= b2
        if 1 - f1 >= eta:
            assert b1 == 0.0

    def test_param_validation(self):
        for kw in ({"eta": 0.0}, {"beta_max": 1.0}, {"mass": 0.0}, {"inertia": ((1, 0, 0), (0, -1, 0), (0, 0, 1))}):
            with pytest.raises(ValueError):
                CurriculumParams(**kw)


class TestWrench:
    def test_static_hold(self):
        p = CurriculumParams(mass=12.0, kp_v=50.0)
        s = SimpleNamespace(base_pos=np.zeros(3), base_quat=IDENTITY.copy(), base_linvel=np.zeros(3),
                            base_angvel=np.zeros(3))
        r = SimpleNamespace(base_pos=np.zeros(3), base_quat=IDENTITY.copy(), base_linvel=np.zeros(3),
                            base_angvel=np.zeros(3), base_linacc=np.zeros(3), base_angacc=np.zeros(3))
        F, M = nominal_wrench(s, r, p)
        np.testing.assert_allclose(F, [0, 0, 12 * 9.81])
        np.testing.assert_array_equal(M, 0.0)

    def test_attitude_error_moment(self):
        p = CurriculumParams(kd_w=0.0, inertia=((2.0, 0, 0), (0, 3.0, 0), (0, 0, 4.0)), gravity=(0, 0, 0))
        s = SimpleNamespace(base_pos=np.zeros(3), base_quat=IDENTITY.copy(), base_linvel=np.zeros(3),
                            base_angvel=np.zeros(3))
        r = SimpleNamespace(base_pos=np.zeros(3), base_quat=quat_from_axis_angle((0, 1, 0), 0.1),
                            base_linvel=np.zeros(3), base_angvel=np.zeros(3), base_linacc=np.zeros(3),
                            base_angacc=np.zeros(3))
        _, M = nominal_wrench(s, r, p)
        np.testing.assert_allclose(M, [0, 200 * 3.0 * 0.1, 0], atol=1e-12)

    def test_com_offset_gravity_moment(self):
        p = CurriculumParams(mass=2.0, r_com=(0.1, 0.0, 0.0))
        s = SimpleNamespace(base_pos=np.zeros(3), base_quat=IDENTITY.copy(), base_linvel=np.zeros(3),
                            base_angvel=np.zeros(3))
        r = SimpleNamespace(**vars(s), base_linacc=np.zeros(3), base_angacc=np.zeros(3))
        _, M = nominal_wrench(s, r, p)
        np.testing.assert_allclose(M, [0, -0.1 * 2 * 9.81, 0], atol=1e-12)

    def test_matches_world_frame_oracle(self):
        rng = np.random.default_rng(0)
        p = CurriculumParams(kp_v=30.0, mass=7.0, inertia=((0.3, 0.01, 0.0), (0.01, 0.5, 0.02), (0.0, 0.02, 0.4)),
                             r_com=(0.02, -0.01, 0.05))
        for _ in range(200):
            s, r = random_pair(rng)
            F, M = nominal_wrench(s, r, p)
            Fo, Mo = oracle_wrench(s, r, p)
            np.testing.assert_allclose(F, Fo, atol=1e-10)
            np.testing.assert_allclose(M, Mo, atol=1e-9)

    def test_linear_in_beta(self):
        rng = np.random.default_rng(1)
        p = CurriculumParams()
        s, r = random_pair(rng)
        full = assistive_wrench(s, r, p, 1.0).as_vector()
        for beta in (0.0, 0.25, 0.6):
            np.testing.assert_allclose(assistive_wrench(s, r, p, beta).as_vector(), beta * full, rtol=1e-14)
        assert np.all(assistive_wrench(s, r, p, 0.0).as_vector() == 0.0)

    def test_beta_range(self):
        s, r = random_pair(np.random.default_rng(2))
        with pytest.raises(ValueError):
            assistive_wrench(s, r, CurriculumParams(), 1.5)

    def test_spatial_ordering(self):
        w = cur.Wrench(np.array([1.0, 2, 3]), np.array([4.0, 5, 6]))
        np.testing.assert_array_equal(w.as_vector(), [1, 2, 3, 4, 5, 6])
        np.testing.assert_array_equal(w.as_spatial(), [4, 5, 6, 1, 2, 3])


class TestDecay:
    def test_reaches_zero_within_bound(self):
        p = CurriculumParams()
        bound = cur.decay_iteration_bound(p)
        trace = cur.decay_harness(p, bound + 50)
        assert trace.first_zero is not None and trace.first_zero <= bound
        assert np.all(trace.beta[trace.first_zero - 1:] == 0.0)

    def test_bound_value(self):
        # similarity hits 1 after 40 iterations; f then needs ln(0.2)/ln(0.995) more steps
        assert cur.decay_iteration_bound(CurriculumParams()) == 40 + 322 + 1

    def test_beta_nonincreasing_once_improving(self):
        trace = cur.decay_harness(CurriculumParams(), 800)
        # f can rise while the similarity is still below 1 - f; after that it only falls
        k = int(np.argmax(trace.failure))
        assert np.all(np.diff(trace.beta[k:]) <= 0)

    def test_batched_equals_single(self):
        a = cur.decay_harness(CurriculumParams(), 300)
        b = cur.decay_harness(CurriculumParams(), 300, episodes_per_iteration=7)
        np.testing.assert_allclose(a.failure, b.failure, rtol=1e-14)

    def test_improving_similarity(self):
        s = cur.improving_similarity(50)
        assert s[0] == 0.2 and s[-1] == 1.0 and np.all(np.diff(s) >= 0)
