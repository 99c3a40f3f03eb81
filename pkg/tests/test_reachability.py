import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frictionhjb import toy
from frictionhjb.integrator import ControlSignal, integrate
from frictionhjb.reachability import Feasibility, attainable, in_domain, reach

TOY = toy.toy_scenario(h=1e-2, delta=1e-2)


def test_speed_bound_keeps_target_out_of_reach():
    rt = reach(TOY, 0.0, [-1.0], 0.1)
    assert attainable(TOY, rt).empty
    # |v'| <= 2 on v < 0
    ext = rt.extent(len(rt.times) - 1)
    assert ext[0, 0] >= -1.2 - 1e-9 and ext[0, 1] <= -0.8 + 1e-9


def test_earliest_attainable_time_is_outer():
    # optimal arrival at r = 0.8 from v = -1: 0.5 + 1.6 = 2.1
    rt = reach(TOY, 0.0, [-1.0], 2.3)
    att = attainable(TOY, rt)
    assert not att.empty
    first = att.points[:, 0].min()
    assert 2.1 - 0.1 <= first <= 2.1 + 1e-9
    assert np.all(att.points[:, 1] >= 0.8)


@settings(max_examples=10)
@given(st.floats(-1.5, 1.5), st.lists(st.sampled_from([-2.0, -1.0, 0.0, 1.0, 2.0]), min_size=3, max_size=3))
def test_trajectories_stay_in_reach_table(x0, us):
    rt = reach(TOY, 0.0, [x0], 0.6)
    sig = ControlSignal.piecewise_constant([0.0, 0.2, 0.4], [[u] for u in us])
    tr = integrate(TOY, 0.0, [x0], sig, 0.6, 1e-2)
    for k, x in enumerate(tr.states):
        if x[0] < -2.0 or x[0] > 3.0:
            break
        assert rt.contains(k, x, inflate=1)


def test_in_domain():
    assert in_domain(TOY, 0.0, [-1.0], 2.3) is Feasibility.FEASIBLE
    assert in_domain(TOY, 0.0, [-1.0], 1.0) is Feasibility.INFEASIBLE_UP_TO_HORIZON
    assert in_domain(TOY, 0.0, [0.9], 0.0) is Feasibility.FEASIBLE
    with pytest.raises(ValueError):
        in_domain(TOY, 5.0, [0.0], 2.0)


def test_start_outside_box():
    with pytest.raises(ValueError):
        reach(TOY, 0.0, [5.0], 0.1)


def test_exit_time_recorded():
    rt = reach(TOY, 0.0, [-1.9], 0.2)
    assert rt.exit_time is not None and rt.exit_time <= 0.1


def test_csv_outputs(tmp_path):
    rt = reach(TOY, 0.0, [0.79], 0.05)
    att = attainable(TOY, rt)
    rt.to_csv(tmp_path / "r.csv")
    att.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "r.csv").read_text().startswith("s,cell_index,x_center_1")
    assert (tmp_path / "a.csv").read_text().startswith("s,y_1")
    assert len(att) > 0
