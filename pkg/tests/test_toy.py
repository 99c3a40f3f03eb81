import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import vex_closed, vex_oracle
from frictionhjb import toy

params = st.tuples(st.floats(0.2, 10.0), st.floats(0.1, 1.5))


def test_v_star_cube_root():
    assert toy.v_star(1.0) == 1.0
    assert toy.v_star(8.0) == pytest.approx(0.5)
    assert toy.v_stop(1.0, 1.2) == 1.2


@pytest.mark.parametrize("t, v, want", [(0, 2, 0.25), (0, 0.5, 2.0), (0, -1, 3.5), (0, 1, 1.0)])
def test_reference_values(t, v, want):
    assert float(toy.value(t, v)) == pytest.approx(want, abs=1e-12)
    assert vex_oracle(t, v) == pytest.approx(want, abs=1e-6)


@given(st.floats(0, 5), st.floats(-2, 3), params)
def test_closed_form_matches_direct_minimization(t, v, cr):
    C, r = cr
    assert float(toy.value(t, v, C, r)) == pytest.approx(vex_oracle(t, v, C, r), abs=1e-6 * max(1.0, C))
    assert float(toy.value(t, v, C, r)) == pytest.approx(float(vex_closed(t, v, C, r)), rel=1e-12, abs=1e-12)


@given(st.floats(-2, 3), params)
def test_value_grows_linearly_in_time(v, cr):
    C, r = cr
    assert float(toy.value(1.0, v, C, r) - toy.value(0.0, v, C, r)) == pytest.approx(C)


@given(st.floats(-2, 3).filter(lambda v: abs(v) > 1e-3), params)
def test_gradient_matches_finite_differences(v, cr):
    C, r = cr
    vs = toy.v_stop(C, r)
    if abs(v - vs) < 1e-3:
        return
    e = 1e-6
    fd = (toy.value(0.0, v + e, C, r) - toy.value(0.0, v - e, C, r)) / (2 * e)
    assert float(toy.gradient(0.0, v, C, r)[1]) == pytest.approx(float(fd), rel=1e-5, abs=1e-5)


@given(st.floats(-2, 3), params)
def test_arrival_consistent_with_feedback_speed(v, cr):
    C, r = cr
    vs = toy.v_stop(C, r)
    a = float(toy.arrival_time(0.0, v, C, r))
    if v >= vs:
        assert a == 0.0
    elif v >= 0:
        assert a == pytest.approx((vs - v) / 0.5)
    else:
        assert a == pytest.approx(-v / 2 + (vs / 0.5))


def test_kink_differentials():
    sub, sup = toy.proximal_differentials(0.0, 0.0)
    assert sub.shape == (0, 2)
    assert sup.shape == (20, 2)
    assert sup[:, 1].min() == -2.0 and sup[:, 1].max() == -0.5
    sub, sup = toy.proximal_differentials(0.0, 1.2, r=1.2)
    assert sup.shape == (0, 2) and sub.shape[0] == 20


def test_feedback_regions():
    v = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_array_equal(toy.feedback_control(0, v), [2, 1, 1, 0, 0])
    np.testing.assert_array_equal(toy.feedback_velocity(0, v), [2, 0.5, 0.5, 0, 0])


def test_toy_scenario_overrides():
    s = toy.toy_scenario(8.0, 0.4, h=0.01)
    assert s.params["C"] == 8.0 and s.params["r"] == 0.4 and s.numerics["h"] == 0.01
