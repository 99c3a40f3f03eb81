"""Acceptance suite on the bundled toy: one test per criterion, at the stated tolerances.

Each test prints and records a PASS/FAIL line; the lines are repeated in
the terminal summary.  Value-level checks use the closed-form oracle in
``conftest`` rather than the package's own toy module.
"""

import numpy as np
import pytest

from frictionhjb import acceptance as acc
from frictionhjb import toy
from frictionhjb.dynamics import eval_Fbar
from frictionhjb.hjb import brute_force_value, query_value
from frictionhjb.verify import ipc_check

from conftest import ACCEPTANCE_LINES, vex_closed, vex_oracle


@pytest.fixture(scope="module")
def ctx():
    return acc.ToyContext()


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_toy_value_function(ctx):
    vt = ctx.table
    secs = ctx.timings["solve_value"]
    refs = [(0.0, 2.0), (0.0, 0.5), (0.0, -1.0), (0.0, 1.0), (1.0, 0.25), (1.0, 0.9)]
    ref = max(abs(query_value(vt, t, [v]) - vex_oracle(t, v)) for t, v in refs)
    tt, vv = np.meshgrid(vt.times, vt.axes()[0], indexing="ij")
    mask = ctx.comparison_mask()
    assert mask.sum() > 0.5 * mask.size
    err = np.where(vt.inf, np.inf, np.abs(vt.values - vex_closed(tt, vv)))
    grid = float(err[mask].max())
    record("toy value function", ref <= 5e-2 and grid <= 1e-1 and secs <= 60.0,
           f"reference max err {ref:.3g} <= 0.05, grid max err {grid:.3g} <= 0.1, solve {secs:.1f} s <= 60 s")


def test_toy_fbar_table(ctx):
    s = ctx.scenario
    want = {0.5: (-4.0, 0.5), 2.0: (-4.0, 0.5), 0.0: (-4.0, 2.0), -1.0: (-2.0, 2.0), -0.01: (-2.0, 2.0)}
    err = max(max(abs(eval_Fbar(s, 0.0, [v]).lo - lo), abs(eval_Fbar(s, 0.0, [v]).hi - hi))
              for v, (lo, hi) in want.items())
    has = all(np.any(np.abs(s.controls[:, 0] - u) < 1e-12) for u in (-2.0, 1.0, 2.0))
    record("toy Fbar table", err <= 1e-12 and has, f"max endpoint err {err:.3g} <= 1e-12, controls present: {has}")


def test_ipc_value(ctx):
    rep, _ = ipc_check(ctx.scenario)
    dev = max(abs(r.residual + 0.5) for r in rep.records)
    record("IPC value", dev <= 1e-9 and len(rep) > 0, f"{len(rep)} boundary samples, max |min + 0.5| {dev:.3g} <= 1e-9")


def test_viscosity_conditions_closed_form(ctx):
    probes = [v for vs in acc.t14_probes(ctx).values() for v in vs] + [0.0]
    agree = max(abs(float(toy.value(0.0, v)) - float(vex_closed(0.0, v))) for v in probes)
    c, _ = acc.t14_criterion(ctx)
    record("viscosity conditions (closed form)", c.passed and agree <= 1e-12,
           f"{c.detail}, closed form vs oracle {agree:.3g}")


def test_hj_residuals(ctx):
    c = acc.hj_criterion(ctx, probes=200)
    record("HJ residuals", c.passed and c.threshold == pytest.approx(10 * (2e-3 + 2e-3)), c.detail)


def test_gronwall_uniqueness(ctx):
    c = acc.gronwall_criterion(ctx, trials=100)
    record("Gronwall/uniqueness", c.passed, c.detail)


def test_osl(ctx):
    c = acc.osl_criterion(ctx, pairs=1000)
    record("OSL", c.passed and c.measured <= 1e-9, c.detail)


def test_oracle_agreement(ctx):
    errs = []
    for t, v in acc.oracle_probes(ctx, 20):
        assert np.isfinite(vex_oracle(t, v))
        errs.append(abs(brute_force_value(ctx.scenario, t, [v], depth=25, branching=5)
                        - query_value(ctx.table, t, [v])))
    worst = max(errs)
    record("oracle agreement", len(errs) == 20 and worst <= 0.1,
           f"20 probes, depth 25, branching 5, max |oracle - solver| {worst:.3g} <= 0.1")


def test_steering_ratio_sweep(ctx):
    c = acc.p7_criterion(ctx, samples=50)
    record("steering ratio sweep", c.passed, c.detail)


def test_invariance(ctx):
    c = acc.invariance_criterion(ctx, trials=1000)
    record("invariance", c.passed, c.detail)


def test_feedback_structure(ctx):
    rate, dev, n = acc.feedback_table(ctx)
    record("feedback structure", rate >= 0.99 and dev <= 1e-6 and n > 0,
           f"{n} nodes, region match {100 * rate:.2f}% >= 99%, v=0 limit velocity deviation {dev:.3g} <= 1e-6")
