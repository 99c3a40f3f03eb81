from pathlib import Path

import numpy as np
import pytest

from conftest import vex_closed
from frictionhjb import toy
from frictionhjb.hjb import (STOP, BudgetExceeded, OutOfGridError, brute_force_value, extract_feedback,
                             follow_feedback, oracle_controls, query_value, query_values, solve_value)
from frictionhjb.scenario import load_scenario

PLANAR = Path(__file__).with_name("planar.scn")


def test_coarse_value_close_to_closed_form(coarse_table):
    vt = coarse_table
    for t, v in [(0.0, 2.0), (0.0, 0.5), (0.0, -1.0), (1.0, 0.25), (1.0, 0.9)]:
        assert query_value(vt, t, [v]) == pytest.approx(float(vex_closed(t, v)), abs=0.05)


def test_on_target_nodes_stop(coarse_table):
    vt = coarse_table
    axis = vt.axes()[0]
    above = axis >= 1.0 + 1e-9
    assert np.all(vt.choice[0][above] == STOP)
    np.testing.assert_allclose(vt.values[0][above], 1.0 / axis[above] ** 2)


def test_infinite_beyond_horizon(coarse_table):
    # from v = -2 at t = 5 the target needs 3 time units
    assert np.isinf(query_value(coarse_table, 5.0, [-2.0]))
    assert np.isfinite(query_value(coarse_table, 0.0, [-2.0]))


def test_value_monotone_in_time(coarse_table):
    vt = coarse_table
    fin = ~vt.inf[:-1] & ~vt.inf[1:]
    assert np.all(vt.values[1:][fin] >= vt.values[:-1][fin] - 1e-12)


def test_query_out_of_grid(coarse_table):
    with pytest.raises(OutOfGridError):
        query_value(coarse_table, 0.0, [10.0])
    vals = query_values(coarse_table, 0.0, np.array([[0.5], [2.0]]))
    np.testing.assert_allclose(vals, [query_value(coarse_table, 0.0, [0.5]), 0.25])


def test_oracle_matches_closed_form(coarse_toy):
    assert oracle_controls(coarse_toy, 5)[:, 0].tolist() == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert brute_force_value(coarse_toy, 0.0, [2.0], 3, 5) == pytest.approx(0.25)
    assert brute_force_value(coarse_toy, 0.0, [0.5], 25, 5) == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(BudgetExceeded):
        brute_force_value(coarse_toy, 0.0, [0.5], 10_000, 5)


def test_feedback_regions(coarse_toy, coarse_table):
    law = extract_feedback(coarse_toy, coarse_table)
    assert law.control(0.0, [-1.0])[0] == 2.0
    assert law.control(0.0, [0.5])[0] == 1.0
    assert law.control(0.0, [1.5]) is None
    # on the kink the one-sided limit from v > 0 is used
    assert law.control(0.0, [0.0])[0] == 1.0


def test_follow_feedback_reaches_v_star(coarse_toy, coarse_table):
    law = extract_feedback(coarse_toy, coarse_table)
    res = follow_feedback(coarse_toy, law, 0.0, [-1.0])
    assert res.stopped
    assert res.stop_time == pytest.approx(2.5, abs=0.05)
    assert res.trajectory.final_state[0] == pytest.approx(1.0, abs=0.02)


def test_csv_outputs(tmp_path, coarse_toy, coarse_table):
    coarse_table.to_csv(tmp_path / "v.csv", time_stride=100)
    extract_feedback(coarse_toy, coarse_table).to_csv(tmp_path / "f.csv", time_stride=100)
    head = (tmp_path / "v.csv").read_text().splitlines()
    assert head[0].startswith("t,x")
    assert (tmp_path / "f.csv").read_text().splitlines()[0].startswith("t,")


def test_planar_minimal_time():
    s = load_scenario(PLANAR)
    vt = solve_value(s)
    # straight run at speed 1.5 along the axis, and 1.5 per axis on the diagonal
    assert query_value(vt, 0.0, [0.8, 0.0]) == pytest.approx(0.5 / 1.5, abs=0.06)
    assert query_value(vt, 0.0, [0.8, 0.8]) == pytest.approx((0.8 * np.sqrt(2) - 0.3) / (1.5 * np.sqrt(2)), abs=0.06)
    assert query_value(vt, 0.0, [0.0, 0.0]) == 0.0


def test_solve_is_deterministic(coarse_toy):
    s = coarse_toy.with_numerics(h=5e-2, delta=5e-2)
    a, b = solve_value(s), solve_value(s)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.choice, b.choice)
