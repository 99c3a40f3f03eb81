import numpy as np
import pytest
from hypothesis import given, strategies as st

from frictionhjb import toy
from frictionhjb.integrator import (BatchPiecewise, ControlSignal, IntegrationError, gronwall_check, integrate,
                                    integrate_batch, prox_friction_step, step, step_witness, time_grid)
from frictionhjb.scenario import estimate_constants, loads_scenario

TOY = toy.toy_scenario()


@given(st.floats(0, 5), st.floats(0, 5), st.floats(1e-3, 1.0))
def test_time_grid(t0, dur, h):
    ts = time_grid(t0, t0 + dur, h)
    assert ts[0] == t0 and ts[-1] == pytest.approx(t0 + dur, abs=1e-9)
    assert np.all(np.diff(ts) > 0) and np.all(np.diff(ts) <= h * (1 + 1e-9))


def test_time_grid_errors():
    with pytest.raises(ValueError):
        time_grid(1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        time_grid(0.0, 1.0, 0.0)


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(1e-4, 0.1))
def test_relu_prox_is_soft_threshold(y, u, h):
    """For v > 0 the friction is u^2/2; prox of c*relu is a one-sided shrink."""
    c = h * u * u / 2
    z = float(prox_friction_step(TOY, 0.0, np.array([0.0]), np.array([u]), h, np.array([y]))[0])
    want = y - c if y > c else (y if y < 0 else 0.0)
    assert z == pytest.approx(want, abs=1e-12)


def test_toy_accelerations():
    # v < 0 with u = 2 moves at 2; v > 0 with u = 1 at 1/2; u = 0 holds
    tr = integrate(TOY, 0.0, [-1.0], ControlSignal.constant([2.0]), 0.25, 1e-3)
    assert tr.final_state[0] == pytest.approx(-0.5, abs=1e-9)
    tr = integrate(TOY, 0.0, [0.0], ControlSignal.constant([1.0]), 1.0, 1e-3)
    assert tr.final_state[0] == pytest.approx(0.5, abs=1e-9)
    tr = integrate(TOY, 0.0, [1.3], ControlSignal.constant([0.0]), 1.0, 1e-3)
    assert tr.final_state[0] == 1.3


def test_toy_optimal_path_reaches_v_star():
    law = ControlSignal.feedback(lambda t, x: [float(toy.feedback_control(t, x[0]))])
    tr = integrate(TOY, 0.0, [-1.0], law, 2.5, 2e-3)
    assert tr.final_state[0] == pytest.approx(1.0, abs=5e-3)
    assert len(tr.events) == 1 and tr.events[0][0] == pytest.approx(0.5, abs=3e-3)


def test_linear_matches_exponential(linear_s):
    # x' = x + u, exact x(T) = (x0 + u) e^T - u; explicit Euler error O(h)
    tr = integrate(linear_s, 0.0, [0.2], ControlSignal.constant([1.0]), 1.0, 1e-4)
    exact = 1.2 * np.e - 1.0
    assert tr.final_state[0] == pytest.approx(exact, abs=1e-3)


def test_single_row_when_T_equals_t0():
    tr = integrate(TOY, 0.3, [0.1], ControlSignal.constant([1.0]), 0.3, 1e-2)
    assert tr.times.tolist() == [0.3] and tr.states.shape == (1, 1)


def test_piecewise_signal():
    sig = ControlSignal.piecewise_constant([0.0, 0.5], [[2.0], [-1.0]])
    assert sig(-1.0, None)[0] == 2.0 and sig(0.49, None)[0] == 2.0 and sig(0.5, None)[0] == -1.0
    with pytest.raises(ValueError):
        ControlSignal.piecewise_constant([0.5, 0.5], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        ControlSignal.constant([1.55]).check(TOY)


def test_blow_up_raises():
    s = loads_scenario(toy.toy_path().read_text().replace('g = "u"', 'g = "exp(v**2) * u"'))
    with pytest.raises(IntegrationError) as err:
        integrate(s, 0.0, [2.5], ControlSignal.constant([2.0]), 1.0, 0.1)
    assert err.value.time >= 0.0


def test_witness_realizes_step():
    x, u, h = np.array([0.0]), np.array([1.0]), 1e-2
    xn = step(TOY, 0.0, x, u, h)
    xi = step_witness(TOY, 0.0, x, u, h, xn)
    assert 0.0 <= xi[0, 0] <= 1.0
    vel = TOY.g(0.0, x, u) - TOY.friction_coefficients(0.0, x, u) @ xi
    np.testing.assert_allclose((xn - x) / h, vel, atol=1e-12)


def test_integration_bitwise_deterministic():
    ctrl = ControlSignal.piecewise_constant([0.0, 0.3, 0.7], [[2.0], [-1.0], [1.0]])
    a = integrate(TOY, 0.0, [-1.0], ctrl, 1.5, 2e-3)
    b = integrate(TOY, 0.0, [-1.0], ctrl, 1.5, 2e-3)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.event_flags, b.event_flags)


def test_batch_matches_scalar():
    X0 = np.array([[-1.0], [0.0], [0.7]])
    times = np.array([[0.0, 0.4]] * 3)
    vals = np.array([[[2.0], [1.0]], [[1.0], [-2.0]], [[0.0], [2.0]]])
    bt = integrate_batch(TOY, 0.0, X0, BatchPiecewise(times, vals), 1.0, 1e-2, start=[0, 10, 0])
    for b in range(3):
        sig = ControlSignal.piecewise_constant(times[b], vals[b])
        t0 = bt.times[[0, 10, 0][b]]
        tr = integrate(TOY, t0, X0[b], sig, 1.0, 1e-2)
        np.testing.assert_allclose(bt.states[-1, b], tr.final_state, atol=1e-12)


def test_gronwall_bounds_hold(linear_s):
    for s in (TOY, linear_s):
        rep = gronwall_check(s, estimate_constants(s), 20)
        assert rep.trials == 20
        assert rep.max_ratio_excess <= 5 * s.numerics["h"] * (1 + s.box_radius)
        assert rep.max_eq_time_excess <= 1e-9


def test_trajectory_csv(tmp_path):
    tr = integrate(TOY, 0.0, [-0.01], ControlSignal.constant([2.0]), 0.02, 1e-2)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x_1,u,event_flag" and len(lines) == 4
    assert lines[-1].endswith(",0") and lines[2].endswith(",1")
