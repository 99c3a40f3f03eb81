import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frictionhjb import toy
from frictionhjb.scenario import load_scenario
from frictionhjb.verify import (SteeringError, VerificationReport, check_HJ_pointwise, check_T14,
                                differentiable_probes, h_min, invariance_sample_test, ipc_check, ipc_min,
                                near_tube_starts, p7_ratio_sweep, proximal_probe, steer_to_target,
                                steering_constants)

PLANAR = Path(__file__).with_name("planar.scn")
V_TOY = lambda t, x: toy.value(t, x[..., 0])  # noqa: E731
DIFFS = lambda t, x: toy.proximal_differentials(t, x[0])  # noqa: E731


# ------------------------------------------------------------------ report

@pytest.mark.parametrize("sense, residual, ok", [
    ("le", 0.5, True), ("le", 1.5, False), ("ge", -0.5, True), ("ge", -1.5, False),
    ("abs", -0.9, True), ("abs", 1.1, False), ("neg", -1.0, True), ("neg", -0.5, False),
])
def test_record_senses(sense, residual, ok):
    rep = VerificationReport()
    assert rep.add("HJ1", 0.0, [0.0], residual, 1.0, sense).passed is ok


def test_report_summary_and_csv(tmp_path):
    rep = VerificationReport()
    rep.add("HJ1", 0.0, [1.0], 0.1, 1.0, "le")
    rep.add("HJ1", 0.0, [2.0], 2.0, 1.0, "le")
    rep.add("HJ2", 0.0, [3.0], 0.0, 1.0, "le", skip=True)
    assert not rep.passed and len(rep.failures()) == 1
    assert rep.worst("HJ1") == 2.0
    assert "overall: FAIL" in rep.summary()
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "condition,t,x,residual,tolerance,pass,note"
    assert [l.split(",")[5] for l in lines[1:]] == ["1", "0", "skip"]
    with pytest.raises(ValueError):
        rep.add("bogus", 0.0, [0.0], 0.0, 0.0, "le")


# --------------------------------------------------------------------- IPC

def test_toy_ipc_value(toy_s):
    rep, rho = ipc_check(toy_s)
    assert len(rep) == 64 and rep.passed
    assert all(abs(r.residual + 0.5) <= 1e-9 for r in rep.records)
    assert rho == 0.5


def test_ipc_fail_scenario_reports():
    s = load_scenario(toy.data_path("ipc_fail.scn"))
    rep, rho = ipc_check(s)
    assert not rep.passed and rho == 0.0
    assert rep.worst("IPC") == pytest.approx(1.0)


def test_planar_ipc():
    rep, rho = ipc_check(load_scenario(PLANAR))
    # on the unit circle the best inward speed along the normal is at least 1.5 / sqrt(2)
    assert rep.passed and rho >= 1.0


def test_ipc_min_matches_hand_value(toy_s):
    # normal (0, -1) at v = r: min over [-4, 0.5] of -w is -0.5
    assert ipc_min(toy_s, 0.0, [0.8], [0.0, -1.0]) == -0.5


def test_h_min(toy_s):
    assert h_min(toy_s, 0.0, [-1.0], [1.0]) == -2.0
    assert h_min(toy_s, 0.0, [1.0], [-2.0]) == -1.0


# ---------------------------------------------------------------- probes

def test_probe_on_smooth_function():
    pr = proximal_probe(lambda T, X: T + X[:, 0] ** 2, 0.0, [0.5])
    assert not pr.sub_empty and not pr.sup_empty
    np.testing.assert_allclose(pr.sub.mean(0), [1.0, 1.0], atol=1e-3)


def test_probe_on_kinks():
    convex = proximal_probe(lambda T, X: np.abs(X[:, 0]), 0.0, [0.0])
    concave = proximal_probe(lambda T, X: -np.abs(X[:, 0]), 0.0, [0.0])
    assert not convex.sub_empty and convex.sup_empty
    assert concave.sub_empty and not concave.sup_empty
    assert convex.sub[:, 1].min() <= -0.9 and convex.sub[:, 1].max() >= 0.9


@given(st.floats(-1.9, 2.9).filter(lambda v: abs(v) > 0.05 and abs(v - 1.0) > 0.05))
def test_probe_recovers_toy_gradient(v):
    pr = proximal_probe(V_TOY, 0.0, [v])
    g = np.array([1.0, float(toy.gradient(0.0, v)[1])])
    assert not pr.sub_empty
    assert np.abs(pr.sub - g).max() <= 1e-2 * (1 + abs(g[1]))


def test_toy_kink_has_no_subgradient():
    pr = proximal_probe(V_TOY, 0.0, [0.0], eps=1e-2, M_max=1e3)
    assert pr.sub_empty and not pr.sup_empty
    assert pr.sup[:, 1].min() >= -2.0 - 1e-2 and pr.sup[:, 1].max() <= -0.5 + 1e-2


# --------------------------------------------------------- viscosity rows

def test_closed_form_conditions(toy_s):
    probes = [(0.0, np.array([v])) for v in (-1.5, -0.5, 0.3, 0.9, 1.5, 2.5)] + [(0.0, np.array([0.0]))]
    rep = check_T14(toy_s, V_TOY, probes, differentials=DIFFS)
    assert rep.passed
    assert max(abs(r.residual) for r in rep.select("T14-vii")) <= 1e-9
    kink = [r for r in rep.select("T14-viii") if r.x == (0.0,)]
    assert len(kink) == 20 and min(r.residual for r in kink) >= -1e-9


def test_closed_form_probe_mode(toy_s):
    rep = check_T14(toy_s, V_TOY, [(0.0, np.array([v])) for v in (-1.0, 0.5, 0.0)])
    assert rep.passed


def test_wrong_value_fails_vii(toy_s):
    # doubling the slope breaks the Hamilton-Jacobi equality on v < 0
    bad = lambda t, x: toy.value(t, x[..., 0]) - toy.value(0.0, x[..., 0])  # noqa: E731
    rep = check_T14(toy_s, bad, [(0.0, np.array([-1.0]))],
                    differentials=lambda t, x: (np.array([[1.0, -1.0]]), np.array([[1.0, -1.0]])))
    assert not rep.passed


def test_tabulated_conditions(coarse_toy, coarse_table):
    pts = differentiable_probes(coarse_toy, coarse_table, 20, seed=1)
    assert len(pts) == 20
    assert check_HJ_pointwise(coarse_toy, coarse_table, pts).passed
    assert check_T14(coarse_toy, coarse_table, pts[:5]).passed


def test_invariance_on_table(coarse_toy, coarse_table):
    rep = invariance_sample_test(coarse_toy, coarse_table, 100)
    assert len(rep.select("strong-inv")) == 100 and len(rep.select("weak-inv")) == 100
    assert rep.passed


def test_invariance_detects_inflated_value(coarse_toy, coarse_table):
    import copy

    bad = copy.copy(coarse_table)
    bad.values = coarse_table.values.copy()
    bad.values[: bad.values.shape[0] // 2] += 1.0  # break the time monotonicity
    rep = invariance_sample_test(coarse_toy, bad, 50, weak=False)
    assert not rep.passed


# --------------------------------------------------------------- steering

def test_steering_constants_toy(toy_s):
    theta, L_K, C, L_G = steering_constants(toy_s, 0.4)
    assert L_G == pytest.approx(4.0) and C == 1.0
    assert theta == pytest.approx(0.99 / 5) and L_K == pytest.approx(5 / 0.4)


def test_steer_from_below_target(toy_s):
    res = steer_to_target(toy_s, 0.0, [0.7], 0.4)
    assert res.hit and res.decay_ok
    assert res.hit_point[0] >= 0.8 - 1e-12
    assert res.ratio <= res.L_K


def test_steering_precondition(toy_s):
    with pytest.raises(ValueError):
        steer_to_target(toy_s, 0.0, [-1.0], 0.4)


def test_steering_stuck_raises():
    s = load_scenario(toy.data_path("ipc_fail.scn"))
    with pytest.raises(SteeringError):
        steer_to_target(s, 0.0, [0.75], 0.4)


def test_p7_sweep(toy_s):
    rep, results = p7_ratio_sweep(toy_s, 10)
    assert len(results) == 10 and rep.passed
    assert all(r.hit and r.decay_ok for r in results)
    assert max(r.ratio for r in results) <= 1.05 * results[0].L_K


def test_near_tube_starts(toy_s):
    starts = near_tube_starts(toy_s, 5, 0.1)
    for t, x in starts:
        assert 0.7 < x[0] < 0.8


def test_ipc_fail_sweep_rejected():
    s = load_scenario(toy.data_path("ipc_fail.scn"))
    with pytest.raises(ValueError):
        p7_ratio_sweep(s, 3)
    assert math.isfinite(steering_constants(s, 1.0)[1])
