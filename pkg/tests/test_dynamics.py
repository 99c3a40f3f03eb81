from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frictionhjb.dynamics import (eval_F, eval_Fbar, hamiltonians, osl_check, subdifferential, support_Fbar,
                                  velocity_table)
from frictionhjb.scenario import estimate_constants, load_scenario

PLANAR = Path(__file__).with_name("planar.scn")


@pytest.mark.parametrize("v, lo, hi", [(0.5, -4.0, 0.5), (2.7, -4.0, 0.5), (0.0, -4.0, 2.0),
                                       (-1.0, -2.0, 2.0), (-1e-9, -2.0, 2.0)])
def test_toy_fbar_table(toy_s, v, lo, hi):
    fb = eval_Fbar(toy_s, 0.0, [v])
    assert fb.lo == pytest.approx(lo, abs=1e-12) and fb.hi == pytest.approx(hi, abs=1e-12)


@given(st.floats(-2, 2), st.floats(-2, 3))
def test_toy_F_matches_closed_form(u, v):
    toy_s = load_scenario(Path(__file__).parents[1] / "src/frictionhjb/data/toy.scn")
    F = eval_F(toy_s, 0.0, [v], [u])
    if v > 0:
        want = (u - u * u / 2, u - u * u / 2)
    elif v < 0:
        want = (u, u)
    else:
        want = (u - u * u / 2, u)
    assert (F.lo, F.hi) == pytest.approx(want, abs=1e-12)


@given(st.floats(-2, 3))
def test_every_F_inside_Fbar(v):
    toy_s = load_scenario(Path(__file__).parents[1] / "src/frictionhjb/data/toy.scn")
    fb = eval_Fbar(toy_s, 0.0, [v])
    for u in toy_s.controls[::5]:
        F = eval_F(toy_s, 0.0, [v], u)
        assert fb.lo - 1e-12 <= F.lo <= F.hi <= fb.hi + 1e-12


def test_subdifferential_of_relu(toy_s):
    assert tuple(subdifferential(toy_s, [0.0], 0)) == (0.0, 1.0)
    assert tuple(subdifferential(toy_s, [1.0], 0)) == (1.0, 1.0)
    assert tuple(subdifferential(toy_s, [-1.0], 0)) == (0.0, 0.0)


@given(st.floats(-2, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_hamiltonians_bracket_support(v, et, ex):
    toy_s = load_scenario(Path(__file__).parents[1] / "src/frictionhjb/data/toy.scn")
    hp = hamiltonians(toy_s, 0.0, [v], [et, ex, 0.0])
    fb = eval_Fbar(toy_s, 0.0, [v])
    assert hp.h_min <= hp.H_max
    assert hp.H_max == pytest.approx(et + max(fb.lo * ex, fb.hi * ex))
    assert hp.h_min == pytest.approx(et + min(fb.lo * ex, fb.hi * ex))
    assert float(support_Fbar(toy_s, 0.0, np.array([v]), np.array([ex]))) == pytest.approx(hp.H_max - et)


def test_hamiltonian_needs_augmented_covector(toy_s):
    with pytest.raises(ValueError):
        hamiltonians(toy_s, 0.0, [0.0], [1.0, 1.0])


def test_osl_toy_is_dissipative(toy_s):
    rep = osl_check(toy_s, estimate_constants(toy_s), 500)
    assert rep.max_violation <= 1e-9
    assert rep.rows.shape == (500, 7)


def test_osl_linear(linear_s):
    rep = osl_check(linear_s, estimate_constants(linear_s), 200)
    assert rep.max_violation <= 1e-9


def test_osl_csv(tmp_path, toy_s):
    rep = osl_check(toy_s, estimate_constants(toy_s), 3)
    p = tmp_path / "osl.csv"
    rep.to_csv(p, 1)
    lines = p.read_text().splitlines()
    assert lines[0] == "t1,x1,t2,x2,lhs,bound,violation" and len(lines) == 4


def test_planar_fbar_is_box_hull():
    s = load_scenario(PLANAR)
    fb = eval_Fbar(s, 0.0, [0.5, 0.5])
    ext = np.sort(fb.extreme_points, axis=0)
    np.testing.assert_allclose(np.unique(ext[:, 0]), [-1.5, 0.5])
    np.testing.assert_allclose(np.unique(ext[:, 1]), [-1.5, 0.5])
    fb0 = eval_Fbar(s, 0.0, [0.0, 0.5])
    assert fb0.support(np.array([1.0, 0.0])) == pytest.approx(1.5)
    assert fb0.contains(np.array([0.0, 0.0]))


def test_velocity_table_covers_extremes(toy_s):
    tab = velocity_table(toy_s, 0.0, np.array([[-1.0], [0.0], [1.0]]), interior=3)
    c = tab.cand[..., 0]
    np.testing.assert_allclose(np.nanmin(c, -1), [-2.0, -4.0, -4.0])
    np.testing.assert_allclose(np.nanmax(c, -1), [2.0, 2.0, 0.5])
    # u = 0 holds at every state
    assert np.all(toy_s.controls[tab.stop_control, 0] <= 0)
