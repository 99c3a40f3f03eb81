import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frictionhjb import toy
from frictionhjb.scenario import (ScenarioError, ValidationError, estimate_constants, load_scenario,
                                  loads_scenario, sample_points)

TOY = toy.toy_path().read_text()


def test_toy_loads_with_expected_data(toy_s):
    assert toy_s.name == "toy"
    assert toy_s.dim == 1 and toy_s.ctrl_dim == 1
    u = toy_s.controls[:, 0]
    assert u[0] == -2.0 and u[-1] == 2.0 and np.all(np.diff(u) > 0)
    for want in (-2.0, 1.0, 2.0):
        assert np.any(u == want)
    assert toy_s.params == {"C": 1.0, "r": 0.8}
    assert toy_s.t_max_horizon == 6.0
    assert toy_s.numerics["h"] == 2e-3
    np.testing.assert_array_equal(toy_s.kinks()[0], [0.0])


def test_controls_sorted_and_deduplicated():
    s = loads_scenario(TOY.replace('controls = { lo = -2.0, hi = 2.0, count = 41 }', 'controls = [1.0, -2.0, 1.0, 2.0]'))
    np.testing.assert_array_equal(s.controls[:, 0], [-2.0, 1.0, 2.0])


@pytest.mark.parametrize("name, message", [
    ("bad_measure.scn", "negative atom weight"),
    ("nonconvex.scn", "non-convex"),
])
def test_bundled_invalid_scenarios(name, message):
    with pytest.raises(ValidationError, match=message) as err:
        load_scenario(toy.data_path(name))
    assert err.value.hypothesis == "H4"


def test_zero_weight_rejected():
    with pytest.raises(ValidationError, match="nonpositive"):
        loads_scenario(TOY.replace("weight = 1.0", "weight = 0.0"))


def test_negative_k_rejected():
    with pytest.raises(ValidationError) as err:
        loads_scenario(TOY.replace('k = "u**2 * alpha"', 'k = "-alpha"'))
    assert err.value.hypothesis == "H3"


@pytest.mark.parametrize("edit", [
    ("[cost]", "[costs]"),
    ('g = "u"', 'g = "u +"'),
    ("state_box = [[-2.0, 3.0]]", ""),
    ('W = "C*t + 1/v**2"', 'W = "C*t + 1/y**2"'),
])
def test_malformed_scenarios(edit):
    with pytest.raises(ScenarioError):
        loads_scenario(TOY.replace(*edit))


def test_missing_file():
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario("/nonexistent/file.scn")


def test_degenerate_box_rejected():
    with pytest.raises(ValidationError):
        loads_scenario(TOY.replace("state_box = [[-2.0, 3.0]]", "state_box = [[1.0, 1.0]]"))


def test_toy_constants(toy_s):
    c = estimate_constants(toy_s)
    assert c.L == 0.0 and c.L_F == 0.0 and c.L_Fbar == 0.0
    assert c.C2 == 0.0
    # |g| <= 2 and k = u^2 alpha <= 2 on U
    assert c.C1 == pytest.approx(2.0)


def test_linear_constants(linear_s):
    c = estimate_constants(linear_s)
    # g = x + u: unit Lipschitz in x, no friction
    assert c.L == pytest.approx(1.0)
    assert c.kappa == 1.0
    assert c.L_Fbar == pytest.approx(2.0)


def test_lambda_r_monotone_in_time(linear_s):
    c = estimate_constants(linear_s)
    t = np.linspace(0, 1, 11)
    lam = c.lambda_r(1.0, t)
    assert np.all(np.diff(lam) > 0) and np.all(lam >= 2.0)


@given(st.integers(1, 50), st.integers(0, 50), st.integers(0, 10_000))
def test_sample_points_prefix_consistent(n, extra, seed):
    s = toy.toy_scenario()
    t1, x1 = sample_points(s, n, seed)
    t2, x2 = sample_points(s, n + extra, seed)
    np.testing.assert_array_equal(t1, t2[:n])
    np.testing.assert_array_equal(x1, x2[:n])
    assert np.all((x1 >= -2.0) & (x1 <= 3.0)) and np.all((t1 >= 0) & (t1 <= 6))


@given(st.floats(-2, 3), st.floats(0, 6))
def test_signed_distance_matches_interval(x, t):
    s = toy.toy_scenario()
    d = float(s.target.signed_distance(t, np.array([x])))
    assert d == pytest.approx(0.8 - x, abs=1e-12)
    assert bool(s.target.contains(t, np.array([x]))) == (x >= 0.8)
    assert float(s.target.state_distance(t, np.array([x]))) == pytest.approx(max(0.0, 0.8 - x))


def test_time_range_empties_target():
    s = loads_scenario(TOY.replace('intervals = [["r", "inf"]]', 'intervals = [["r", "inf"]]\ntime_range = [1.0, 2.0]'))
    assert math.isinf(float(s.target.state_distance(0.5, np.array([1.0]))))
    assert float(s.target.state_distance(1.5, np.array([1.0]))) == 0.0


def test_moving_target_expression():
    s = loads_scenario(TOY.replace('intervals = [["r", "inf"]]', 'intervals = [["r + t", "inf"]]'))
    lo, hi = s.target.bounds(np.array([0.0, 1.0]))[0]
    np.testing.assert_allclose(lo, [0.8, 1.8])
    assert not s.target.time_invariant


def test_with_numerics_does_not_mutate(toy_s):
    s2 = toy_s.with_numerics(h=0.1)
    assert s2.numerics["h"] == 0.1 and toy_s.numerics["h"] == 2e-3
