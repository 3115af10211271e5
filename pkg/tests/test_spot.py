import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionimit import spot
from motionimit.spot import ActuatorParams, ActuatorState, LowPassFilter, power_limit, total_power

finite = st.floats(-200, 200, allow_nan=False)


def test_saturation_examples():
    assert spot.saturate(0.0, 0.005) == 0.0
    assert spot.saturate(100.0, 0.005) == pytest.approx(100 / 1.5)
    assert spot.saturate(-100.0, 0.005) == pytest.approx(-100 / 1.5)
    assert spot.saturate(7.0, 0.0) == 7.0


@settings(max_examples=200, deadline=None)
@given(finite, finite)
def test_saturation_odd_monotone_bounded(a, b):
    k = 0.005
    assert spot.saturate(-a, k) == -spot.saturate(a, k)
    assert abs(spot.saturate(a, k)) < 1 / k
    if a < b:
        assert spot.saturate(a, k) <= spot.saturate(b, k)


def test_friction_shape():
    p = ActuatorParams()
    assert spot.friction(0.0, p) == 0.0
    assert spot.friction(10.0, p) == pytest.approx(-p.coulomb - 10 * p.viscous, rel=1e-12)
    assert spot.friction(-2.0, p) == pytest.approx(-spot.friction(2.0, p))


def test_output_closed_form():
    p = ActuatorParams()
    tau, w, a = 40.0, 2.0, 3.0
    pre = tau / (1 + p.k * tau) - p.rotor_inertia * a
    expect = p.eta_plus * pre - p.coulomb * np.tanh(p.smoothing * w) - p.viscous * w
    assert spot.actuator_output(tau, w, a, p) == pytest.approx(expect, rel=1e-14)
    # braking: the motor torque opposes the motion
    pre = -tau / (1 + p.k * tau) - p.rotor_inertia * a
    expect = p.eta_minus * pre - p.coulomb * np.tanh(p.smoothing * w) - p.viscous * w
    assert spot.actuator_output(-tau, w, a, p) == pytest.approx(expect, rel=1e-14)


def test_ideal_actuator_is_identity():
    p = ActuatorParams(k=0.0, rotor_inertia=0.0, coulomb=0.0, viscous=0.0, eta_plus=1.0, eta_minus=1.0)
    tau = np.linspace(-50, 50, 11)
    np.testing.assert_array_equal(spot.actuator_output(tau, 1.0, 5.0, p), tau)


def test_work_sign_hysteresis():
    assert spot.work_sign(1.0, 1.0) == 1.0
    assert spot.work_sign(1.0, -1.0) == -1.0
    assert spot.work_sign(1.0, -0.001) == 1.0
    assert spot.work_sign(1.0, -0.001, previous=-1.0) == -1.0


def test_low_pass_filter():
    f = LowPassFilter(100.0, 0.004)
    assert f.alpha == pytest.approx(0.004 / (0.004 + 1 / (200 * np.pi)))
    assert f(3.0) == 3.0
    y = [f(0.0) for _ in range(200)][-1]
    assert abs(y) < 1e-12
    f.reset()
    assert f(-1.0) == -1.0


def test_stateful_output_filters():
    p = ActuatorParams(cutoff_hz=10.0)
    st_ = ActuatorState(0.004, p.cutoff_hz)
    first = spot.actuator_output(10.0, 1.0, 0.0, p, st_)
    assert first == pytest.approx(spot.actuator_output(10.0, 1.0, 0.0, p))
    second = spot.actuator_output(-10.0, 1.0, 0.0, p, st_)
    raw = spot.actuator_output(-10.0, 1.0, 0.0, p)
    assert raw < second < first


def test_params_validation_and_dict():
    with pytest.raises(ValueError):
        ActuatorParams(eta_plus=1.2)
    with pytest.raises(ValueError):
        ActuatorParams(k=-1)
    with pytest.raises(ValueError):
        ActuatorParams.from_dict({"k": 0.1, "gear": 3})
    p = ActuatorParams(k=0.01)
    assert ActuatorParams.from_dict(p.to_dict()) == p


class TestPowerLimit:
    def test_under_budget_untouched(self):
        res = power_limit([1.0, -2.0], [1.0, 1.0], 10.0)
        assert res.scale == 1.0 and not res.infeasible
        np.testing.assert_array_equal(res.torque, [1.0, -2.0])

    def test_linear_case(self):
        res = power_limit([10.0, 10.0], [2.0, 3.0], 25.0)
        assert res.scale == pytest.approx(0.5)
        assert res.power <= 25.0

    def test_regenerating_left_alone(self):
        res = power_limit([10.0, -10.0], [2.0, 2.0], 5.0, r=0.01)
        assert res.torque[1] == -10.0
        assert res.power <= 5.0

    def test_quadratic_root(self):
        tau, w, r = np.array([20.0]), np.array([1.0]), 0.05
        res = power_limit(tau, w, 15.0, r=r)
        s = res.scale
        assert 20 * s + r * 400 * s * s == pytest.approx(15.0, rel=1e-12)

    def test_idle_loss_infeasible(self):
        res = power_limit([5.0], [1.0], 1.0, idle_loss=2.0)
        assert res.infeasible and res.scale == 0.0
        np.testing.assert_array_equal(res.torque, [0.0])

    def test_bad_budget(self):
        with pytest.raises(ValueError):
            power_limit([1.0], [1.0], 0.0)

    def test_tiny_resistance_no_cancellation(self):
        # b s^2 << a s: the textbook root formula loses most of its digits here
        tau, w = np.array([200.0, -150.0]), np.array([30.0, 25.0])
        res = power_limit(tau, w, 0.37, r=1e-14)
        assert res.power <= 0.37
        assert res.scale == pytest.approx(0.37 / 6000.0, rel=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.tuples(finite, st.floats(-30, 30)), min_size=1, max_size=12),
           st.floats(0.1, 500), st.floats(0, 0.05), st.floats(0, 5))
    def test_audit(self, pairs, budget, r, idle):
        tau = np.array([p[0] for p in pairs])
        w = np.array([p[1] for p in pairs])
        res = power_limit(tau, w, budget, r=r, idle_loss=idle)
        if res.infeasible:
            assert idle > budget
            return
        assert res.power <= budget
        assert 0.0 <= res.scale <= 1.0
        assert np.all(np.abs(res.torque) <= np.abs(tau))
        assert np.all(res.torque * tau >= 0)
        again = power_limit(res.torque, w, budget, r=r, idle_loss=idle)
        np.testing.assert_array_equal(again.torque, res.torque)
        assert res.power == pytest.approx(total_power(res.torque, w, r, idle))


class TestEfficiencyFit:
    def test_exact_recovery(self):
        p = ActuatorParams(eta_plus=0.87, eta_minus=0.71)
        log = spot.synthetic_log(p, n=3000)
        fit = spot.fit_efficiency(log["tau_in"], log["omega"], log["alpha"], log["tau_out"], p)
        assert fit.eta_plus == pytest.approx(0.87, abs=1e-10)
        assert fit.eta_minus == pytest.approx(0.71, abs=1e-10)
        assert fit.residual < 1e-10 and fit.n_plus > 0 and fit.n_minus > 0

    def test_noisy_recovery(self):
        p = ActuatorParams()
        log = spot.synthetic_log(p, n=5000, noise=0.2, rng=np.random.default_rng(3))
        fit = spot.fit_efficiency(log["tau_in"], log["omega"], log["alpha"], log["tau_out"], p)
        assert abs(fit.eta_plus - 0.9) < 0.01 and abs(fit.eta_minus - 0.8) < 0.01

    def test_one_sided_log_warns(self):
        p = ActuatorParams()
        n = 100
        with pytest.warns(RuntimeWarning):
            fit = spot.fit_efficiency(np.full(n, 10.0), np.full(n, 1.0), np.zeros(n),
                                      spot.actuator_output(np.full(n, 10.0), 1.0, 0.0, p), p)
        assert fit.eta_plus == pytest.approx(0.9) and np.isnan(fit.eta_minus)

    def test_degenerate_log(self):
        with pytest.raises(ValueError):
            spot.fit_efficiency(np.zeros(5), np.ones(5), np.zeros(5), np.zeros(5), ActuatorParams())

    def test_log_round_trip(self, tmp_path):
        log = spot.synthetic_log(ActuatorParams(), n=50)
        spot.write_log(tmp_path / "log.csv", log)
        back = spot.read_log(tmp_path / "log.csv")
        for c in spot.LOG_COLUMNS:
            np.testing.assert_allclose(back[c], log[c], rtol=1e-12)

    def test_log_missing_column(self, tmp_path):
        (tmp_path / "bad.csv").write_text("t,tau_in\n0,1\n")
        with pytest.raises(ValueError):
            spot.read_log(tmp_path / "bad.csv")
